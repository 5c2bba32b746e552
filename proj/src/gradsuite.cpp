#include "woundnet/gradsuite.hpp"

#include <functional>

#include "woundnet/gradcheck.hpp"
#include "woundnet/loss.hpp"
#include "woundnet/model.hpp"
#include "woundnet/ops.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::model {
namespace {

using ad::Tape;
using ad::Var;

NdArray random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  NdArray a(std::move(shape));
  for (double& v : a.data()) v = uniform(rng, lo, hi);
  return a;
}

// random fixed projection, so upstream gradients are not all ones
Var project(Var y, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(y, y.tape()->constant(random_array(y.shape(), rng))));
}

struct Case {
  std::string name;
  std::vector<Shape> inputs;
  std::function<Var(Tape&, std::vector<ad::Parameter>&)> build;
};

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opt) {
  Rng rng(derive_seed(opt.seed, "gradsuite"));
  const NdArray rm = random_array({2}, rng), rv = random_array({2}, rng, 0.5, 2.0);

  auto p = [](std::vector<ad::Parameter>& ps, Tape& t, std::size_t i) { return t.param(ps[i]); };
  const std::vector<Case> cases{
      {"linear", {{3, 5}, {4, 5}, {4}}, [&](Tape& t, auto& ps) { return project(ad::linear(p(ps, t, 0), p(ps, t, 1), p(ps, t, 2)), 1); }},
      {"conv2d 3x3 stride 2 pad 1", {{2, 3, 6, 6}, {4, 3, 3, 3}, {4}},
       [&](Tape& t, auto& ps) { return project(ad::conv2d(p(ps, t, 0), p(ps, t, 1), p(ps, t, 2), 2, 1), 2); }},
      {"conv2d 1x1", {{2, 4, 3, 3}, {2, 4, 1, 1}, {2}},
       [&](Tape& t, auto& ps) { return project(ad::conv2d(p(ps, t, 0), p(ps, t, 1), p(ps, t, 2), 1, 0), 3); }},
      {"relu", {{4, 7}}, [&](Tape& t, auto& ps) { return project(ad::relu(p(ps, t, 0)), 4); }},
      {"sigmoid", {{4, 7}}, [&](Tape& t, auto& ps) { return project(ad::sigmoid(ad::scale(p(ps, t, 0), 3.0)), 5); }},
      {"add sub mul scale", {{2, 3, 2, 2}, {2, 3, 2, 2}},
       [&](Tape& t, auto& ps) {
         auto a = p(ps, t, 0), b = p(ps, t, 1);
         return project(ad::sub(ad::add(ad::mul(a, b), a), ad::scale(b, 0.5)), 6);
       }},
      {"concat", {{2, 3, 2, 2}, {2, 1, 2, 2}},
       [&](Tape& t, auto& ps) { return project(ad::concat({p(ps, t, 0), p(ps, t, 1)}), 7); }},
      {"max_pool2d", {{2, 2, 6, 6}}, [&](Tape& t, auto& ps) { return project(ad::max_pool2d(p(ps, t, 0), 2, 2), 8); }},
      {"global_avg_pool", {{2, 3, 4, 5}}, [&](Tape& t, auto& ps) { return project(ad::global_avg_pool(p(ps, t, 0)), 9); }},
      {"column mean sum", {{4, 5}},
       [&](Tape& t, auto& ps) {
         auto a = p(ps, t, 0);
         return ad::add(ad::mean(ad::mul(ad::column(a, 2), ad::column(a, 4))), ad::scale(ad::sum(a), 0.1));
       }},
      {"batch_norm2d train", {{3, 2, 3, 3}, {2}, {2}},
       [&](Tape& t, auto& ps) {
         return project(ad::batch_norm2d(p(ps, t, 0), p(ps, t, 1), p(ps, t, 2), rm, rv, ad::Mode::train), 10);
       }},
      {"batch_norm2d eval", {{3, 2, 3, 3}, {2}, {2}},
       [&](Tape& t, auto& ps) {
         return project(ad::batch_norm2d(p(ps, t, 0), p(ps, t, 1), p(ps, t, 2), rm, rv, ad::Mode::eval), 11);
       }},
      {"weighted_bce_loss", {{4, 5}},
       [&](Tape& t, auto& ps) {
         NdArray y({4, 5});
         for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>((i * 7 + 3) % 3 == 0);
         ClassWeights w{{{0.7, 1.5}, {1.2, 0.8}, {0.6, 2.4}, {0.5, 20.0}, {0.6, 3.1}}};
         return weighted_bce_loss(ad::scale(p(ps, t, 0), 2.0), y, w);
       }},
  };

  std::vector<GradSuiteEntry> out;
  for (const auto& c : cases) {
    std::vector<ad::Parameter> leaves;
    leaves.reserve(c.inputs.size());
    for (std::size_t i = 0; i < c.inputs.size(); ++i)
      leaves.emplace_back("in" + std::to_string(i), random_array(c.inputs[i], rng));
    std::vector<ad::Parameter*> ptrs;
    for (auto& l : leaves) ptrs.push_back(&l);
    const auto rep =
        ad::check_gradients([&](Tape& t) { return c.build(t, leaves); }, ptrs, {1e-4, 0, derive_seed(opt.seed, c.name)});
    out.push_back({c.name, rep.worst(), opt.primitive_tolerance});
  }

  ModelConfig cfg;
  cfg.input_size = opt.model_input;
  cfg.stage_channels = {4, 8, 8, 8};
  cfg.classifier_hidden = 8;
  WoundModel net(cfg, derive_seed(opt.seed, "gradsuite/model"));
  const NdArray x = random_array({2, 3, opt.model_input, opt.model_input}, rng, 0.0, 1.0);
  NdArray y({2, cfg.num_tasks});
  for (double& v : y.data()) v = static_cast<double>(uniform01(rng) < 0.5);
  const ClassWeights w{{{0.7, 1.5}, {1.2, 0.8}, {0.6, 2.4}, {0.5, 20.0}, {0.6, 3.1}}};
  const auto rep = ad::check_gradients([&](Tape& t) { return weighted_bce_loss(net.forward(t, x), y, w); },
                                       net.trainable_parameters(), {1e-4, opt.model_entries, opt.seed});
  out.push_back({"full model " + std::to_string(opt.model_input) + "x" + std::to_string(opt.model_input),
                 rep.worst(), opt.model_tolerance});
  return out;
}

}  // namespace woundnet::model
