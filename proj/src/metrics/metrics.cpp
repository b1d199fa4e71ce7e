#include "cfbench/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace cfbench::metrics {

double l1_distance(const Image& a, const Image& b) { return cfbench::l1_distance(flat(a), flat(b)); }
double l2_distance(const Image& a, const Image& b) { return cfbench::l2_distance(flat(a), flat(b)); }

McSummary mc_uncertainty(const Classifier& model, const Image& image, int target, const models::McDropoutConfig& cfg) {
  if (target < 0 || target >= model.num_classes()) throw Error("mc uncertainty: target class out of range");
  const auto passes = model.mc_forward_passes(Vec<double>(flat(image)), cfg);
  Vec<double> p(static_cast<Eigen::Index>(passes.size()));
  for (std::size_t t = 0; t < passes.size(); ++t) p[static_cast<Eigen::Index>(t)] = passes[t][target];
  McSummary s;
  s.mean = p.mean();
  s.std = std::sqrt((p.array() - s.mean).square().mean());
  return s;
}

double im1(const Image& image, const Autoencoder& ae_cf, const Autoencoder& ae_orig) {
  const Vec<double> x = flat(image);
  return ae_cf.reconstruction_error(x) / (ae_orig.reconstruction_error(x) + kIm1Epsilon);
}

LofModel::LofModel(Mat<double> reference, int k) : reference_(std::move(reference)), k_(k) {
  const Eigen::Index n = reference_.cols();
  if (k_ < 1) throw ConfigError("lof: k must be >= 1");
  if (n < k_ + 1)
    throw Error("lof: reference set has " + std::to_string(n) + " points, need at least " + std::to_string(k_ + 1));

  // Candidate neighbours come from the GEMM distances; the final values are
  // recomputed exactly so the result does not depend on rounding in the GEMM.
  const Mat<double> approx = squared_distances(reference_, reference_);
  std::vector<Neighbourhood> hoods(static_cast<std::size_t>(n));
  k_distance_.resize(n);
  std::vector<double> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.assign(approx.col(i).data(), approx.col(i).data() + n);
    row[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
    std::nth_element(row.begin(), row.begin() + (k_ - 1), row.end());
    const double cut = row[static_cast<std::size_t>(k_ - 1)] * (1.0 + 1e-6) + 1e-9;
    Vec<double> d = Vec<double>::Constant(n, std::numeric_limits<double>::infinity());
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && approx(j, i) <= cut) d[j] = (reference_.col(j) - reference_.col(i)).norm();
    hoods[static_cast<std::size_t>(i)] = neighbours(d, i);
    k_distance_[i] = hoods[static_cast<std::size_t>(i)].distances.empty()
                         ? 0.0
                         : *std::max_element(hoods[static_cast<std::size_t>(i)].distances.begin(),
                                             hoods[static_cast<std::size_t>(i)].distances.end());
  }
  lrd_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = hoods[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (std::size_t m = 0; m < nb.members.size(); ++m) sum += std::max(k_distance_[nb.members[m]], nb.distances[m]);
    lrd_[i] = 1.0 / (sum / static_cast<double>(nb.members.size()) + 1e-10);
  }
}

LofModel::Neighbourhood LofModel::neighbours(const Vec<double>& d, Eigen::Index exclude) const {
  std::vector<double> sorted(d.data(), d.data() + d.size());
  if (exclude >= 0) sorted[static_cast<std::size_t>(exclude)] = std::numeric_limits<double>::infinity();
  std::nth_element(sorted.begin(), sorted.begin() + (k_ - 1), sorted.end());
  const double kd = sorted[static_cast<std::size_t>(k_ - 1)];
  Neighbourhood nb;
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (j == exclude || !(d[j] <= kd)) continue;
    nb.members.push_back(j);
    nb.distances.push_back(d[j]);
  }
  return nb;
}

double LofModel::lof_from(const Neighbourhood& nb) const {
  double reach = 0.0, lrd_sum = 0.0;
  for (std::size_t m = 0; m < nb.members.size(); ++m) {
    reach += std::max(k_distance_[nb.members[m]], nb.distances[m]);
    lrd_sum += lrd_[nb.members[m]];
  }
  const double count = static_cast<double>(nb.members.size());
  const double lrd_x = 1.0 / (reach / count + 1e-10);
  return (lrd_sum / count) / lrd_x;
}

double LofModel::lof(const Vec<double>& x) const {
  if (x.size() != reference_.rows()) throw Error("lof: query dimension does not match the reference set");
  const Vec<double> d = (reference_.colwise() - x).colwise().norm().transpose();
  return lof_from(neighbours(d, -1));
}

double LofModel::lof_in_sample(Eigen::Index i) const {
  if (i < 0 || i >= size()) throw Error("lof: reference index out of range");
  const Vec<double> d = (reference_.colwise() - reference_.col(i)).colwise().norm().transpose();
  return lof_from(neighbours(d, i));
}

double lof10_score(const Image& image, const LofModel& reference) {
  if (reference.k() != kLofNeighbours) throw Error("lof10: reference model was fitted with a different k");
  return reference.score(Vec<double>(flat(image)));
}

double substitutability(const std::vector<Image>& explanations, std::span<const int> labels, const Mat<double>& test,
                        std::span<const int> test_labels, double reference_accuracy) {
  if (explanations.empty()) throw Error("substitutability: no explanations");
  if (explanations.size() != labels.size()) throw Error("substitutability: label count mismatch");
  if (!(reference_accuracy > 0.0)) throw Error("substitutability: reference accuracy must be positive");
  Mat<double> ref(kPixels, static_cast<Eigen::Index>(explanations.size()));
  for (std::size_t i = 0; i < explanations.size(); ++i) ref.col(static_cast<Eigen::Index>(i)) = flat(explanations[i]);
  const auto nn = prototypes::nearest_neighbor_classify(ref, labels, test, test_labels);
  return 100.0 * nn.accuracy / reference_accuracy;
}

double grad_cos(const Classifier& model, const Image& a, int label_a, const Image& b, int label_b) {
  const Vec<double> ga = model.parameter_gradient(Vec<double>(flat(a)), label_a);
  const Vec<double> gb = model.parameter_gradient(Vec<double>(flat(b)), label_b);
  const double na = ga.norm(), nb = gb.norm();
  if (na == 0.0 || nb == 0.0) throw Error("grad-cos: zero parameter gradient, cosine undefined");
  return std::clamp(ga.dot(gb) / (na * nb), -1.0, 1.0);
}

double grad_cos_to_prototypes(const Classifier& model, const Image& image, int target,
                              const prototypes::PrototypeSet& prototypes) {
  const auto& cls = prototypes.of(target);
  if (cls.images.empty()) throw Error("grad-cos: no prototypes for class " + std::to_string(target));
  const Vec<double> g = model.parameter_gradient(Vec<double>(flat(image)), target);
  const double ng = g.norm();
  if (ng == 0.0) throw Error("grad-cos: zero parameter gradient, cosine undefined");
  double sum = 0.0;
  for (const Image& p : cls.images) {
    const Vec<double> gp = model.parameter_gradient(Vec<double>(flat(p)), target);
    const double np = gp.norm();
    if (np == 0.0) throw Error("grad-cos: zero parameter gradient at a prototype");
    sum += std::clamp(g.dot(gp) / (ng * np), -1.0, 1.0);
  }
  return sum / static_cast<double>(cls.images.size());
}

MetricRecord evaluate(const EvaluationContext& ctx, const std::string& item_id, const std::string& source,
                      const Image& query, int original_class, int target, const std::optional<Image>& explanation,
                      const std::string& failure_reason) {
  MetricRecord r;
  r.item_id = item_id;
  r.source = source;
  r.target_class = target;
  if (!explanation) {
    r.reason = failure_reason.empty() ? "no explanation" : failure_reason;
    return r;
  }
  if (!ctx.classifier || !ctx.class_autoencoders || !ctx.lof_models || !ctx.prototypes)
    throw Error("metrics: evaluation context is incomplete");
  Image x = *explanation;
  if (ctx.binarize) x = x.unaryExpr([](double v) { return v > 0.0 ? kPixelMax : kPixelMin; });
  const auto& aes = *ctx.class_autoencoders;
  const auto& lofs = *ctx.lof_models;
  const auto ti = static_cast<std::size_t>(target), oi = static_cast<std::size_t>(original_class);
  if (ti >= aes.size() || oi >= aes.size() || ti >= lofs.size()) throw Error("metrics: class index out of range");

  r.covered = true;
  r.l1 = l1_distance(x, query);
  r.l2 = l2_distance(x, query);
  const McSummary mc = mc_uncertainty(*ctx.classifier, x, target, ctx.mc);
  r.mc_mean = mc.mean;
  r.mc_std = mc.std;
  r.im1 = im1(x, aes[ti], aes[oi]);
  r.lof10 = lof10_score(x, lofs[ti]);
  r.grad_cos = grad_cos_to_prototypes(*ctx.classifier, x, target, *ctx.prototypes);
  return r;
}

nlohmann::json to_json(const MetricRecord& r) {
  return {{"item_id", r.item_id}, {"source", r.source}, {"target_class", r.target_class},
          {"covered", r.covered}, {"reason", r.reason}, {"l1", r.l1},
          {"l2", r.l2},           {"mc_mean", r.mc_mean}, {"mc_std", r.mc_std},
          {"im1", r.im1},         {"lof10", r.lof10},   {"grad_cos", r.grad_cos}};
}

MetricRecord record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.source = j.at("source").get<std::string>();
  r.target_class = j.at("target_class").get<int>();
  r.covered = j.at("covered").get<bool>();
  r.reason = j.value("reason", "");
  r.l1 = j.at("l1").get<double>();
  r.l2 = j.at("l2").get<double>();
  r.mc_mean = j.at("mc_mean").get<double>();
  r.mc_std = j.at("mc_std").get<double>();
  r.im1 = j.at("im1").get<double>();
  r.lof10 = j.at("lof10").get<double>();
  r.grad_cos = j.at("grad_cos").get<double>();
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_header() { return "item_id,source,target_class,covered,l1,l2,mc_mean,mc_std,im1,lof10,grad_cos"; }

std::string to_csv_row(const MetricRecord& r) {
  std::string s = r.item_id + "," + r.source + "," + std::to_string(r.target_class) + "," + (r.covered ? "1" : "0");
  for (double v : {r.l1, r.l2, r.mc_mean, r.mc_std, r.im1, r.lof10, r.grad_cos})
    s += "," + (r.covered ? format_double(v) : std::string());
  return s;
}

}  // namespace cfbench::metrics
