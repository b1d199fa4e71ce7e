#include "cfbench/ground_truth/oracle.hpp"

#include "cfbench/nn/losses.hpp"

#include <limits>

namespace cfbench::ground_truth {

OracleEdit synthetic_oracle_edit(const data::MisclassifiedItem& item, const models::ClassifierModel<double>& model,
                                 const prototypes::PrototypeSet& prototypes, double tolerance) {
  if (!(tolerance > 0.0)) throw ConfigError("oracle: tolerance must be positive");
  const auto& cls = prototypes.of(item.true_label);
  if (cls.images.empty()) throw Error("oracle: no prototypes for class " + std::to_string(item.true_label));

  OracleEdit out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cls.images.size(); ++i) {
    const double d = (cls.images[i] - item.query).squaredNorm();
    if (d < best) {
      best = d;
      out.prototype_rank = i;
    }
  }
  const Image& proto = cls.images[out.prototype_rank];
  auto blend = [&](double a) -> Image { return (1.0 - a) * item.query + a * proto; };
  auto valid = [&](double a) { return model.predict(Vec<double>(flat(blend(a)))) == item.true_label; };

  if (!valid(1.0)) {
    out.degenerate = true;
    out.alpha = 1.0;
    out.image = proto;
    return out;
  }
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    (valid(mid) ? hi : lo) = mid;
  }
  out.alpha = hi;
  out.image = blend(hi);
  return out;
}

}  // namespace cfbench::ground_truth
