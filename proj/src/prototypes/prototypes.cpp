#include "cfbench/prototypes/prototypes.hpp"

#include "cfbench/distance.hpp"

#include <algorithm>
#include <limits>

namespace cfbench::prototypes {

void KernelConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("kernel: gamma must be positive and finite");
}

double mmd_squared(const Mat<double>& prototypes, const Mat<double>& data, const KernelConfig& cfg) {
  cfg.validate();
  if (prototypes.cols() == 0 || data.cols() == 0) throw Error("mmd: prototype and data lists must be nonempty");
  if (prototypes.rows() != data.rows()) throw Error("mmd: dimension mismatch");
  auto mean_kernel = [&](const Mat<double>& a, const Mat<double>& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i)
      for (Eigen::Index j = 0; j < b.cols(); ++j) s += rbf_kernel(a.col(i), b.col(j), cfg);
    return s / (static_cast<double>(a.cols()) * static_cast<double>(b.cols()));
  };
  return mean_kernel(prototypes, prototypes) - 2.0 * mean_kernel(prototypes, data) + mean_kernel(data, data);
}

double median_heuristic_gamma(const Mat<double>& data, bool squared) {
  const Eigen::Index n = data.cols();
  if (n < 2) throw Error("median heuristic: need at least two points");
  const Mat<double> d2 = squared_distances(data, data);
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 1; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) v.push_back(squared ? d2(i, j) : std::sqrt(d2(i, j)));
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double med = v[mid];
  if (v.size() % 2 == 0) med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  if (!(med > 0.0)) throw Error("median heuristic: median pairwise distance is zero");
  return 1.0 / med;
}

std::vector<std::size_t> select_prototypes_greedy(const Mat<double>& data, int m, const KernelConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = data.cols();
  if (m < 0 || m > n)
    throw Error("prototype selection: asked for " + std::to_string(m) + " prototypes from " + std::to_string(n) +
                " points");
  Mat<double> k = squared_distances(data, data);
  k = k.unaryExpr([&](double d2) { return kernel_from_sq(d2, cfg); });
  k.diagonal().setOnes();
  const Vec<double> col_mean = k.colwise().sum().transpose() / static_cast<double>(n);

  // For a candidate j added to S (|S| = s), the terms of MMD^2 that depend
  // on the selection are
  //   (K_SS + 2 r_j + k_jj) / (s+1)^2 - 2 (c_S + col_mean_j) / (s+1)
  // with r_j = sum_{i in S} k(i, j) and c_S = sum_{i in S} col_mean_i.
  std::vector<std::size_t> chosen;
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  Vec<double> r = Vec<double>::Zero(n);
  double kss = 0.0, cs = 0.0;
  for (int step = 0; step < m; ++step) {
    const double s1 = static_cast<double>(step + 1);
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index best_j = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      const double v = (kss + 2.0 * r[j] + k(j, j)) / (s1 * s1) - 2.0 * (cs + col_mean[j]) / s1;
      if (v < best) {
        best = v;
        best_j = j;
      }
    }
    taken[static_cast<std::size_t>(best_j)] = 1;
    chosen.push_back(static_cast<std::size_t>(best_j));
    kss += 2.0 * r[best_j] + k(best_j, best_j);
    cs += col_mean[best_j];
    r += k.col(best_j);
  }
  return chosen;
}

const ClassPrototypes& PrototypeSet::of(int label) const {
  for (const auto& c : classes)
    if (c.label == label) return c;
  throw Error("prototype set has no class " + std::to_string(label));
}

Mat<double> PrototypeSet::matrix() const {
  std::size_t total = 0;
  for (const auto& c : classes) total += c.images.size();
  Mat<double> out(kPixels, static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& c : classes)
    for (const auto& im : c.images) out.col(col++) = flat(im);
  return out;
}

std::vector<int> PrototypeSet::labels() const {
  std::vector<int> out;
  for (const auto& c : classes) out.insert(out.end(), c.images.size(), c.label);
  return out;
}

PrototypeSet select_prototypes(const data::DatasetSplit& split, int per_class, bool squared_kernel) {
  if (per_class < 1) throw ConfigError("prototypes: need at least one prototype per class");
  PrototypeSet set;
  set.dataset = split.name;
  set.per_class = per_class;
  for (int c = 0; c < split.num_classes(); ++c) {
    const auto idx = split.train_indices_of(c);
    const Mat<double> x = data::scaled_columns<double>(split.train_images, idx);
    ClassPrototypes cp;
    cp.label = c;
    cp.kernel = {median_heuristic_gamma(x, squared_kernel), squared_kernel};
    for (std::size_t j : select_prototypes_greedy(x, per_class, cp.kernel)) {
      cp.train_indices.push_back(idx[j]);
      cp.images.push_back(to_image<double>(x.col(static_cast<Eigen::Index>(j))));
    }
    set.classes.push_back(std::move(cp));
  }
  return set;
}

NnResult nearest_neighbor_classify(const Mat<double>& reference, std::span<const int> reference_labels,
                                   const Mat<double>& images, std::span<const int> truth) {
  if (reference.cols() == 0) throw Error("1-NN: empty reference set");
  if (static_cast<std::size_t>(reference.cols()) != reference_labels.size()) throw Error("1-NN: label count mismatch");
  if (!truth.empty() && truth.size() != static_cast<std::size_t>(images.cols()))
    throw Error("1-NN: truth count mismatch");
  NnResult out;
  out.predicted.reserve(static_cast<std::size_t>(images.cols()));
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < images.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_label = std::numeric_limits<int>::max();
    for (Eigen::Index j = 0; j < reference.cols(); ++j) {
      const double d = (images.col(i) - reference.col(j)).squaredNorm();
      const int lab = reference_labels[static_cast<std::size_t>(j)];
      if (d < best || (d == best && lab < best_label)) {
        best = d;
        best_label = lab;
      }
    }
    out.predicted.push_back(best_label);
    if (!truth.empty() && truth[static_cast<std::size_t>(i)] == best_label) ++correct;
  }
  if (!truth.empty() && images.cols() > 0)
    out.accuracy = static_cast<double>(correct) / static_cast<double>(images.cols());
  return out;
}

NnResult prototype_1nn_classify(const PrototypeSet& set, const Mat<double>& images, std::span<const int> truth) {
  for (const auto& c : set.classes)
    if (c.images.empty()) throw Error("prototype 1-NN: class " + std::to_string(c.label) + " has no prototypes");
  const auto labels = set.labels();
  return nearest_neighbor_classify(set.matrix(), labels, images, truth);
}

nlohmann::json to_json(const PrototypeSet& set) {
  nlohmann::json j;
  j["dataset"] = set.dataset;
  j["per_class"] = set.per_class;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : set.classes)
    j["classes"].push_back({{"label", c.label},
                            {"gamma", c.kernel.gamma},
                            {"squared_kernel", c.kernel.squared},
                            {"train_indices", c.train_indices}});
  return j;
}

PrototypeSet prototypes_from_json(const nlohmann::json& j, const data::DatasetSplit& split) {
  PrototypeSet set;
  set.dataset = j.at("dataset").get<std::string>();
  set.per_class = j.at("per_class").get<int>();
  for (const auto& cj : j.at("classes")) {
    ClassPrototypes cp;
    cp.label = cj.at("label").get<int>();
    cp.kernel = {cj.at("gamma").get<double>(), cj.at("squared_kernel").get<bool>()};
    cp.train_indices = cj.at("train_indices").get<std::vector<std::size_t>>();
    for (std::size_t idx : cp.train_indices) {
      if (idx >= split.train_labels.size() || split.train_labels[idx] != cp.label)
        throw Error("prototype index " + std::to_string(idx) + " is not a training image of class " +
                    std::to_string(cp.label));
      cp.images.push_back(data::scaled_image(split.train_images, idx));
    }
    set.classes.push_back(std::move(cp));
  }
  return set;
}

}  // namespace cfbench::prototypes
