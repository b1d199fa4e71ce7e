#include "cfbench/cf/counterfactual.hpp"

#include "cfbench/cf/descent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfbench::cf {

std::string to_string(Method m) {
  switch (m) {
    case Method::MinEdit: return "minedit";
    case Method::Cem: return "cem";
    case Method::Vlk: return "vlk";
    case Method::Revise: return "revise";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw ConfigError("unknown counterfactual method '" + s + "' (expected minedit, cem, vlk or revise)");
}

CounterfactualRequest make_request(const data::MisclassifiedItem& item, Method method, std::optional<int> target) {
  CounterfactualRequest req{item, target.value_or(item.true_label), method};
  if (req.target_class == item.predicted_label)
    throw Error("counterfactual request for item " + item.item_id + ": target class equals the predicted class");
  return req;
}

bool check_validity(const Classifier& model, const Vec<double>& x, int target) {
  return nn::argmax(model.logits(x).col(0)) == target;
}

bool check_validity(const Classifier& model, const Image& image, int target) {
  return check_validity(model, Vec<double>(flat(image)), target);
}

void MinEditConfig::validate() const {
  if (!(target_probability > 0.0 && target_probability <= 1.0))
    throw ConfigError("min-edit: target probability must lie in (0, 1]");
  if (lambda < 0.0 || lambda_max <= 0.0) throw ConfigError("min-edit: lambda values must be non-negative");
  if (lambda_search_steps < 0 || descent.max_steps < 1) throw ConfigError("min-edit: step counts must be positive");
}

void CemConfig::validate() const {
  if (beta < 0.0 || gamma < 0.0 || c < 0.0) throw ConfigError("cem: beta, gamma and c must be >= 0");
  if (c_search_steps < 1 || descent.max_steps < 1) throw ConfigError("cem: step counts must be positive");
}

void VlkConfig::validate() const {
  if (prototype_k < 1) throw ConfigError("vlk: prototype_k must be >= 1");
  if (beta < 0.0 || c < 0.0 || ae_weight < 0.0 || proto_weight < 0.0)
    throw ConfigError("vlk: loss weights must be >= 0");
  if (c_search_steps < 1 || descent.max_steps < 1) throw ConfigError("vlk: step counts must be positive");
}

void ReviseConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("revise: step size must be positive");
  if (lambda < 0.0) throw ConfigError("revise: lambda must be >= 0");
  if (max_iterations < 0) throw ConfigError("revise: max_iterations must be >= 0");
  if (l1_reduction != "mean" && l1_reduction != "sum") throw ConfigError("revise: l1_reduction must be mean or sum");
}

void to_json(nlohmann::json& j, const DescentConfig& c) {
  j = {{"max_steps", c.max_steps}, {"step_size", c.step_size}, {"step_growth", c.step_growth},
       {"tolerance", c.tolerance}};
}
void from_json(const nlohmann::json& j, DescentConfig& c) {
  c.max_steps = j.value("max_steps", c.max_steps);
  c.step_size = j.value("step_size", c.step_size);
  c.step_growth = j.value("step_growth", c.step_growth);
  c.tolerance = j.value("tolerance", c.tolerance);
}
void to_json(nlohmann::json& j, const MinEditConfig& c) {
  j = {{"lambda", c.lambda}, {"target_probability", c.target_probability},
       {"lambda_search_steps", c.lambda_search_steps}, {"lambda_max", c.lambda_max}, {"descent", c.descent}};
}
void from_json(const nlohmann::json& j, MinEditConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.target_probability = j.value("target_probability", c.target_probability);
  c.lambda_search_steps = j.value("lambda_search_steps", c.lambda_search_steps);
  c.lambda_max = j.value("lambda_max", c.lambda_max);
  if (j.contains("descent")) j.at("descent").get_to(c.descent);
}
void to_json(nlohmann::json& j, const CemConfig& c) {
  j = {{"beta", c.beta},   {"gamma", c.gamma}, {"c", c.c}, {"kappa", c.kappa}, {"c_search_steps", c.c_search_steps},
       {"descent", c.descent}};
}
void from_json(const nlohmann::json& j, CemConfig& c) {
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.c = j.value("c", c.c);
  c.kappa = j.value("kappa", c.kappa);
  c.c_search_steps = j.value("c_search_steps", c.c_search_steps);
  if (j.contains("descent")) j.at("descent").get_to(c.descent);
}
void to_json(nlohmann::json& j, const VlkConfig& c) {
  j = {{"c", c.c},
       {"beta", c.beta},
       {"kappa", c.kappa},
       {"ae_weight", c.ae_weight},
       {"proto_weight", c.proto_weight},
       {"prototype_k", c.prototype_k},
       {"c_search_steps", c.c_search_steps},
       {"descent", c.descent}};
}
void from_json(const nlohmann::json& j, VlkConfig& c) {
  c.c = j.value("c", c.c);
  c.beta = j.value("beta", c.beta);
  c.kappa = j.value("kappa", c.kappa);
  c.ae_weight = j.value("ae_weight", c.ae_weight);
  c.proto_weight = j.value("proto_weight", c.proto_weight);
  c.prototype_k = j.value("prototype_k", c.prototype_k);
  c.c_search_steps = j.value("c_search_steps", c.c_search_steps);
  if (j.contains("descent")) j.at("descent").get_to(c.descent);
}
void to_json(nlohmann::json& j, const ReviseConfig& c) {
  j = {{"lambda", c.lambda},
       {"l1_reduction", c.l1_reduction},
       {"step_size", c.step_size},
       {"max_iterations", c.max_iterations}};
}
void from_json(const nlohmann::json& j, ReviseConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.l1_reduction = j.value("l1_reduction", c.l1_reduction);
  c.step_size = j.value("step_size", c.step_size);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
}

namespace {

CounterfactualResult base_result(const CounterfactualRequest& req) {
  CounterfactualResult r;
  r.method = req.method;
  r.item_id = req.item.item_id;
  r.target_class = req.target_class;
  return r;
}

void check_request(const CounterfactualRequest& req, const Classifier& model) {
  if (req.target_class < 0 || req.target_class >= model.num_classes())
    throw Error("counterfactual request for item " + req.item.item_id + ": target class out of range");
  if (req.target_class == req.item.predicted_label)
    throw Error("counterfactual request for item " + req.item.item_id + ": target class equals the predicted class");
}

/// Finishes a result from a candidate image, re-checking validity on the
/// deterministic forward pass so the flag always matches the definition.
void finish(CounterfactualResult& r, const Classifier& model, const Vec<double>& x) {
  r.image = to_image<double>(x);
  r.valid = check_validity(model, x, r.target_class);
}

}  // namespace

CounterfactualResult generate_min_edit(const CounterfactualRequest& req, const Classifier& model,
                                       const MinEditConfig& cfg) {
  cfg.validate();
  check_request(req, model);
  const Vec<double> x0 = flat(req.item.query);
  const int t = req.target_class;
  const models::LossSpec pred = models::TargetProbabilitySquaredError{t, cfg.target_probability};

  ProxProblem problem;
  problem.center = x0;
  problem.smooth = [&](const Vec<double>& x, Vec<double>* grad, bool* valid) {
    double v = 0.0;
    const Vec<double> g = model.input_gradient_from_logits(
        x,
        [&](const Vec<double>& z, Vec<double>& dz) {
          *valid = nn::argmax(z) == t;
          return models::evaluate_loss(pred, z, dz);
        },
        &v);
    if (grad) *grad = g;
    return v;
  };

  CounterfactualResult r = base_result(req);
  int total_steps = 0;
  std::optional<DescentTrace> best;
  double best_lambda = 0.0;
  auto run = [&](double lambda) {
    problem.l1_weight = lambda;
    DescentTrace trace = proximal_descent(problem, x0, cfg.descent);
    total_steps += trace.steps;
    return trace;
  };

  if (cfg.lambda_search_steps == 0) {
    DescentTrace trace = run(cfg.lambda);
    if (trace.last_valid) {
      best = std::move(trace);
      best_lambda = cfg.lambda;
    }
  } else {
    double lo = 0.0, hi = cfg.lambda_max;
    for (int i = 0; i < cfg.lambda_search_steps; ++i) {
      const double mid = 0.5 * (lo + hi);
      DescentTrace trace = run(mid);
      if (trace.last_valid) {
        best = std::move(trace);
        best_lambda = mid;
        lo = mid;
      } else {
        hi = mid;
      }
    }
    if (!best) {
      DescentTrace trace = run(0.0);
      if (trace.last_valid) best = std::move(trace);
    }
  }

  r.iterations = total_steps;
  if (!best) {
    r.note = "no lambda in the search produced a valid counterfactual";
    return r;
  }
  const Vec<double>& x = *best->last_valid;
  finish(r, model, x);
  bool unused = false;
  problem.l1_weight = best_lambda;
  r.loss_terms["lambda"] = best_lambda;
  r.loss_terms["prediction"] = problem.smooth(x, nullptr, &unused);
  r.loss_terms["l1"] = (x - x0).lpNorm<1>();
  r.loss_terms["objective"] = r.loss_terms["prediction"] + best_lambda * r.loss_terms["l1"];
  return r;
}

CounterfactualResult generate_cem_pn(const CounterfactualRequest& req, const Classifier& model, const Autoencoder& ae,
                                     const CemConfig& cfg) {
  cfg.validate();
  check_request(req, model);
  const Vec<double> x0 = flat(req.item.query);
  const int t = req.target_class;
  CounterfactualResult r = base_result(req);

  double c = cfg.c;
  int total_steps = 0;
  for (int attempt = 0; attempt < cfg.c_search_steps; ++attempt, c *= 10.0) {
    const models::LossSpec attack = models::LogitMarginLoss{t, cfg.kappa};
    double attack_value = 0.0, ae_value = 0.0;
    ProxProblem problem;
    problem.center = x0;
    problem.l1_weight = cfg.beta;
    problem.smooth = [&](const Vec<double>& x, Vec<double>* grad, bool* valid) {
      const Vec<double> g_attack = model.input_gradient_from_logits(
          x,
          [&](const Vec<double>& z, Vec<double>& dz) {
            *valid = nn::argmax(z) == t;
            return models::evaluate_loss(attack, z, dz);
          },
          &attack_value);
      const Vec<double> delta = x - x0;
      double value = c * attack_value + delta.squaredNorm();
      Vec<double> g_ae;
      ae_value = 0.0;
      if (cfg.gamma > 0.0) {
        ae_value = ae.reconstruction_error(x, grad ? &g_ae : nullptr);
        value += cfg.gamma * ae_value;
      }
      if (grad) {
        *grad = c * g_attack + 2.0 * delta;
        if (cfg.gamma > 0.0) *grad += cfg.gamma * g_ae;
      }
      return value;
    };
    const DescentTrace trace = proximal_descent(problem, x0, cfg.descent);
    total_steps += trace.steps;
    if (!trace.last_valid) continue;

    const Vec<double>& x = *trace.last_valid;
    bool unused = false;
    problem.smooth(x, nullptr, &unused);
    finish(r, model, x);
    r.iterations = total_steps;
    r.loss_terms["c"] = c;
    r.loss_terms["attack"] = attack_value;
    r.loss_terms["l1"] = (x - x0).lpNorm<1>();
    r.loss_terms["l2_sq"] = (x - x0).squaredNorm();
    r.loss_terms["ae"] = ae_value;
    r.loss_terms["objective"] = c * attack_value + cfg.beta * r.loss_terms["l1"] + r.loss_terms["l2_sq"] +
                                cfg.gamma * ae_value;
    return r;
  }
  r.iterations = total_steps;
  r.note = "no valid counterfactual after " + std::to_string(cfg.c_search_steps) + " attack weights";
  return r;
}

Vec<double> latent_prototype(const Autoencoder& ae, const Vec<double>& query, const Mat<double>& class_codes, int k) {
  if (k < 1) throw ConfigError("latent prototype: k must be >= 1");
  if (class_codes.cols() == 0) throw Error("latent prototype: target class has no training codes");
  if (class_codes.rows() != ae.latent_dim()) throw Error("latent prototype: code width does not match the encoder");
  const Vec<double> zq = ae.encode(query);
  const Vec<double> d = (class_codes.colwise() - zq).colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
  Vec<double> proto = Vec<double>::Zero(class_codes.rows());
  for (std::size_t i = 0; i < n; ++i) proto += class_codes.col(order[i]);
  return proto / static_cast<double>(n);
}

CounterfactualResult generate_vlk(const CounterfactualRequest& req, const Classifier& model, const Autoencoder& ae,
                                  const Mat<double>& class_codes, const VlkConfig& cfg) {
  cfg.validate();
  check_request(req, model);
  const Vec<double> x0 = flat(req.item.query);
  const int t = req.target_class;
  const Vec<double> proto = latent_prototype(ae, x0, class_codes, cfg.prototype_k);
  CounterfactualResult r = base_result(req);

  double c = cfg.c;
  int total_steps = 0;
  for (int attempt = 0; attempt < cfg.c_search_steps; ++attempt, c *= 10.0) {
    const models::LossSpec pred = models::ProbabilityMarginLoss{t, cfg.kappa};
    double pred_value = 0.0, ae_value = 0.0, proto_value = 0.0;
    ProxProblem problem;
    problem.center = x0;
    problem.l1_weight = cfg.beta;
    problem.smooth = [&](const Vec<double>& x, Vec<double>* grad, bool* valid) {
      const Vec<double> g_pred = model.input_gradient_from_logits(
          x,
          [&](const Vec<double>& z, Vec<double>& dz) {
            *valid = nn::argmax(z) == t;
            return models::evaluate_loss(pred, z, dz);
          },
          &pred_value);
      const Vec<double> delta = x - x0;
      Vec<double> g_ae, g_proto;
      ae_value = cfg.ae_weight > 0.0 ? ae.reconstruction_error(x, grad ? &g_ae : nullptr) : 0.0;
      proto_value = cfg.proto_weight > 0.0 ? ae.latent_distance_sq(x, proto, grad ? &g_proto : nullptr) : 0.0;
      if (grad) {
        *grad = c * g_pred + 2.0 * delta;
        if (cfg.ae_weight > 0.0) *grad += cfg.ae_weight * g_ae;
        if (cfg.proto_weight > 0.0) *grad += cfg.proto_weight * g_proto;
      }
      return c * pred_value + delta.squaredNorm() + cfg.ae_weight * ae_value + cfg.proto_weight * proto_value;
    };
    const DescentTrace trace = proximal_descent(problem, x0, cfg.descent);
    total_steps += trace.steps;
    if (!trace.last_valid) continue;

    const Vec<double>& x = *trace.last_valid;
    bool unused = false;
    problem.smooth(x, nullptr, &unused);
    finish(r, model, x);
    r.iterations = total_steps;
    r.loss_terms["c"] = c;
    r.loss_terms["prediction"] = pred_value;
    r.loss_terms["l1"] = (x - x0).lpNorm<1>();
    r.loss_terms["l2_sq"] = (x - x0).squaredNorm();
    r.loss_terms["ae"] = ae_value;
    r.loss_terms["proto"] = proto_value;
    r.loss_terms["objective"] = c * pred_value + cfg.beta * r.loss_terms["l1"] + r.loss_terms["l2_sq"] +
                                cfg.ae_weight * ae_value + cfg.proto_weight * proto_value;
    return r;
  }
  r.iterations = total_steps;
  r.note = "no valid counterfactual after " + std::to_string(cfg.c_search_steps) + " prediction weights";
  return r;
}

CounterfactualResult generate_revise(const CounterfactualRequest& req, const Classifier& model, const Vae& vae,
                                     const ReviseConfig& cfg) {
  cfg.validate();
  check_request(req, model);
  const Vec<double> x0 = flat(req.item.query);
  const int t = req.target_class;
  const models::LossSpec ce = models::CrossEntropyLoss{t};
  CounterfactualResult r = base_result(req);

  struct Eval {
    typename Vae::DecodeTrace decoded;
    double ce = 0.0, l1 = 0.0, lambda = 0.0;
    double loss() const { return ce + lambda * l1; }
    bool valid = false;
  };
  auto evaluate = [&](const Vec<double>& z, Vec<double>* grad_z) {
    Eval e;
    e.decoded = vae.decode_traced(z);
    const Vec<double>& g_img = e.decoded.image;
    const Vec<double> d_ce = model.input_gradient_from_logits(
        g_img,
        [&](const Vec<double>& logits, Vec<double>& dz) {
          e.valid = nn::argmax(logits) == t;
          return models::evaluate_loss(ce, logits, dz);
        },
        &e.ce);
    const Vec<double> diff = g_img - x0;
    e.l1 = diff.lpNorm<1>();
    e.lambda = cfg.l1_reduction == "mean" ? cfg.lambda / static_cast<double>(diff.size()) : cfg.lambda;
    if (grad_z) *grad_z = vae.decode_pullback(e.decoded, d_ce + e.lambda * diff.array().sign().matrix());
    return e;
  };

  Vec<double> z = vae.encode(x0);
  Vec<double> grad;
  Eval cur;
  double eta = cfg.step_size;
  int it = 0;
  if (cfg.max_iterations > 0) cur = evaluate(z, &grad);
  for (; it < cfg.max_iterations && !cur.valid; ++it) {
    // Halve the step until the loss does not increase.
    Vec<double> z_new, grad_new;
    Eval next;
    double step = eta;
    for (;;) {
      z_new = z - step * grad;
      next = evaluate(z_new, &grad_new);
      if (next.loss() <= cur.loss() || step < 1e-12) break;
      step *= 0.5;
    }
    z = std::move(z_new);
    grad = std::move(grad_new);
    cur = std::move(next);
  }

  r.iterations = it;
  r.loss_terms["cross_entropy"] = cur.ce;
  r.loss_terms["l1"] = cur.l1;
  if (cfg.max_iterations == 0 || !cur.valid) {
    r.note = "generator search did not reach the target class within " + std::to_string(cfg.max_iterations) +
             " iterations";
    return r;
  }
  finish(r, model, cur.decoded.image);
  return r;
}

nlohmann::json result_to_json(const CounterfactualResult& r) {
  nlohmann::json j;
  j["method"] = to_string(r.method);
  j["item_id"] = r.item_id;
  j["target_class"] = r.target_class;
  j["failed"] = r.failed();
  j["valid"] = r.valid;
  j["iterations"] = r.iterations;
  j["loss_terms"] = r.loss_terms;
  j["note"] = r.note;
  return j;
}

CounterfactualResult result_from_json(const nlohmann::json& j, std::optional<Image> image) {
  CounterfactualResult r;
  r.method = method_from_string(j.at("method").get<std::string>());
  r.item_id = j.at("item_id").get<std::string>();
  r.target_class = j.at("target_class").get<int>();
  r.valid = j.at("valid").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.loss_terms = j.at("loss_terms").get<std::map<std::string, double>>();
  r.note = j.value("note", "");
  if (j.at("failed").get<bool>() != !image.has_value())
    throw Error("counterfactual record for item " + r.item_id + ": image presence does not match the failure flag");
  r.image = std::move(image);
  return r;
}

}  // namespace cfbench::cf
