#include "woundnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "woundnet/errors.hpp"
#include "woundnet/rng.hpp"

namespace woundnet::ad {
namespace {

double evaluate(const LossClosure& loss) {
  Tape tape;
  return loss(tape).value().item();
}

}  // namespace

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradCheckReport check_gradients(const LossClosure& loss, const std::vector<Parameter*>& params,
                                const GradCheckOptions& opts) {
  if (opts.epsilon <= 0.0) throw ContractError("check_gradients: epsilon must be positive");

  Tape tape;
  const Var out = loss(tape);
  const Gradients grads = tape.backward(out);
  const double first = out.value().item();
  const double again = evaluate(loss);
  if (std::memcmp(&again, &first, sizeof(double)) != 0)
    throw ContractError("check_gradients: forward closure is not deterministic");

  Rng rng(opts.seed);
  GradCheckReport report;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const NdArray analytic = grads.of(*p);

    std::vector<std::size_t> idx(p->value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_entries != 0 && idx.size() > opts.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries);
    }

    double max_diff = 0.0, max_numeric = 0.0;
    for (std::size_t i : idx) {
      const double orig = p->value[i];
      p->value[i] = orig + opts.epsilon;
      const double up = evaluate(loss);
      p->value[i] = orig - opts.epsilon;
      const double down = evaluate(loss);
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      max_diff = std::max(max_diff, std::abs(analytic[i] - numeric));
      max_numeric = std::max(max_numeric, std::abs(numeric));
    }
    report.entries.push_back({p->name, idx.size(), max_diff / std::max(1.0, max_numeric)});
  }
  return report;
}

}  // namespace woundnet::ad
