#include "cfbench/study/pipeline.hpp"

#include "cfbench/ground_truth/oracle.hpp"
#include "cfbench/hash.hpp"
#include "cfbench/io.hpp"
#include "cfbench/metrics/metrics.hpp"
#include "cfbench/nn/checkpoint.hpp"
#include "cfbench/study/report.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

namespace cfbench::study {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bumped whenever a stage's output format or computation changes.
constexpr int kPipelineVersion = 1;

json read_json(const fs::path& p) { return json::parse(read_text(p.string())); }

void write_json(const fs::path& p, const json& j) { write_text_atomic(p.string(), j.dump(2) + "\n"); }

std::string hash_matrix(const auto& m) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(m.data()),
                                     static_cast<std::size_t>(m.size()) * sizeof(*m.data())));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Pipeline::Pipeline(RunManifest manifest, fs::path out_dir, models::Logger log)
    : manifest_(std::move(manifest)), out_(std::move(out_dir)), log_(std::move(log)) {
  manifest_.validate();
}

void Pipeline::log(const std::string& line) const {
  if (log_) log_(line);
}

const data::DatasetSplit& Pipeline::split() {
  if (!split_) {
    log("loading dataset " + manifest_.dataset);
    split_ = data::load_dataset(manifest_.dataset, manifest_.data_root);
  }
  return *split_;
}

std::string Pipeline::data_fingerprint() {
  if (!fingerprint_) {
    const auto& s = split();
    std::string acc = s.name;
    acc += hash_matrix(s.train_images) + hash_matrix(s.test_images);
    acc += sha256_hex(json(s.train_labels).dump()) + sha256_hex(json(s.test_labels).dump());
    acc += json(s.class_names).dump();
    fingerprint_ = sha256_hex(acc);
  }
  return *fingerprint_;
}

StageInfo Pipeline::run_stage(const std::string& name, const json& inputs, const Body& body) {
  json keyed = inputs;
  keyed["stage"] = name;
  keyed["pipeline_version"] = kPipelineVersion;
  const std::string key = sha256_hex(keyed.dump());
  if (const auto it = done_.find(name); it != done_.end() && it->second.key == key) return it->second;

  StageInfo info{name, key, out_ / "stages" / (name + "-" + key.substr(0, 16)), false};
  if (fs::exists(info.dir / "stage.json")) {
    info.reused = true;
    log("stage " + name + ": reusing " + info.dir.string());
  } else {
    const fs::path partial = info.dir.string() + ".partial";
    fs::remove_all(partial);
    fs::create_directories(partial);
    log("stage " + name + ": running");
    const auto t0 = std::chrono::steady_clock::now();
    json summary = json::object();
    try {
      body(partial, summary);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    write_json(partial / "stage.json", {{"stage", name}, {"key", key}, {"inputs", keyed}, {"summary", summary}});
    fs::remove_all(info.dir);
    fs::rename(partial, info.dir);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1fs", seconds_since(t0));
    log("stage " + name + ": done in " + buf);
  }
  done_[name] = info;
  history_.push_back(info);
  return info;
}

// ---------------------------------------------------------------------------
// Models

StageInfo Pipeline::classifier() {
  const json inputs = {{"data", data_fingerprint()},
                       {"architecture", "conv32-conv64-dense128"},
                       {"train", *manifest_.classifier}};
  return run_stage("classifier", inputs, [&](const fs::path& dir, json& summary) {
    auto res = models::train_classifier(split(), *manifest_.classifier, log_);
    nn::save_checkpoint((dir / "classifier.ckpt").string(),
                        res.model.to_checkpoint({{"test_accuracy", res.test_accuracy}}));
    summary["test_accuracy"] = res.test_accuracy;
    summary["epoch_losses"] = res.epoch_losses;
  });
}

const cf::Classifier& Pipeline::classifier_model() {
  const auto st = classifier();
  if (!classifier_) {
    classifier_ = models::ClassifierModel<float>::from_checkpoint(
                      nn::load_checkpoint((st.dir / "classifier.ckpt").string()))
                      .cast<double>();
  }
  return *classifier_;
}

StageInfo Pipeline::class_autoencoders() {
  const json inputs = {{"data", data_fingerprint()},
                       {"latent", manifest_.ae_latent_dim},
                       {"train", *manifest_.class_autoencoders}};
  return run_stage("class_autoencoders", inputs, [&](const fs::path& dir, json& summary) {
    json per_class = json::array();
    for (int c = 0; c < split().num_classes(); ++c) {
      auto res = models::train_class_autoencoder(split(), c, *manifest_.class_autoencoders, manifest_.ae_latent_dim,
                                                  log_);
      nn::save_checkpoint((dir / ("class_" + std::to_string(c) + ".ckpt")).string(), res.model.to_checkpoint());
      per_class.push_back({{"class", c},
                           {"initial_heldout_loss", res.initial_heldout_loss},
                           {"final_heldout_loss", res.final_heldout_loss}});
    }
    summary["classes"] = per_class;
  });
}

StageInfo Pipeline::dataset_autoencoder() {
  if (!manifest_.dataset_autoencoder) throw ConfigError("manifest has no dataset_autoencoder stage");
  const json inputs = {{"data", data_fingerprint()},
                       {"latent", manifest_.ae_latent_dim},
                       {"train", *manifest_.dataset_autoencoder}};
  return run_stage("dataset_autoencoder", inputs, [&](const fs::path& dir, json& summary) {
    auto res = models::train_dataset_autoencoder(split(), *manifest_.dataset_autoencoder, manifest_.ae_latent_dim, log_);
    nn::save_checkpoint((dir / "autoencoder.ckpt").string(), res.model.to_checkpoint());
    summary["initial_heldout_loss"] = res.initial_heldout_loss;
    summary["final_heldout_loss"] = res.final_heldout_loss;
  });
}

StageInfo Pipeline::vae() {
  if (!manifest_.vae) throw ConfigError("manifest has no vae stage");
  const json inputs = {{"data", data_fingerprint()}, {"latent", manifest_.vae_latent_dim}, {"train", *manifest_.vae}};
  return run_stage("vae", inputs, [&](const fs::path& dir, json& summary) {
    auto res = models::train_vae(split(), *manifest_.vae, manifest_.vae_latent_dim, log_);
    nn::save_checkpoint((dir / "vae.ckpt").string(), res.model.to_checkpoint());
    summary["initial_heldout_neg_elbo"] = res.initial_heldout_neg_elbo;
    summary["final_heldout_neg_elbo"] = res.final_heldout_neg_elbo;
  });
}

// ---------------------------------------------------------------------------
// Items and prototypes

StageInfo Pipeline::sample() {
  const auto clf = classifier();
  const json inputs = {{"classifier", clf.key},
                       {"items", manifest_.items},
                       {"practice", ground_truth::kPracticeItems},
                       {"seed", manifest_.seed}};
  return run_stage("sample", inputs, [&](const fs::path& dir, json& summary) {
    const auto& model = classifier_model();
    const auto predicted = model.predict_labels(data::scaled_all<double>(split().test_images));
    const auto pool = data::misclassified_pool(split(), predicted);
    const std::size_t want = manifest_.items + ground_truth::kPracticeItems;
    if (pool.size() < want)
      throw Error("only " + std::to_string(pool.size()) + " misclassified test images, need " + std::to_string(want));
    // The first `items` draws are the study items, the next draws the practice pool.
    const auto drawn = data::sample_misclassifications(split(), predicted, want, manifest_.seed);
    auto encode = [](auto first, auto last) {
      json a = json::array();
      for (auto it = first; it != last; ++it)
        a.push_back({{"item_id", it->item_id},
                     {"test_index", it->test_index},
                     {"true_label", it->true_label},
                     {"predicted_label", it->predicted_label}});
      return a;
    };
    const auto split_at = drawn.begin() + static_cast<std::ptrdiff_t>(manifest_.items);
    write_json(dir / "items.json", encode(drawn.begin(), split_at));
    write_json(dir / "practice.json", encode(split_at, drawn.end()));
    summary["misclassified_pool"] = pool.size();
  });
}

std::vector<data::MisclassifiedItem> Pipeline::read_items(const std::string& file) {
  const auto st = sample();
  std::vector<data::MisclassifiedItem> out;
  for (const auto& j : read_json(st.dir / file)) {
    data::MisclassifiedItem it;
    it.item_id = j.at("item_id").get<std::string>();
    it.test_index = j.at("test_index").get<std::size_t>();
    it.true_label = j.at("true_label").get<int>();
    it.predicted_label = j.at("predicted_label").get<int>();
    it.query = data::scaled_image(split().test_images, it.test_index);
    out.push_back(std::move(it));
  }
  return out;
}

std::vector<data::MisclassifiedItem> Pipeline::sampled_items() { return read_items("items.json"); }
std::vector<data::MisclassifiedItem> Pipeline::practice_items() { return read_items("practice.json"); }

ground_truth::Study Pipeline::study() {
  ground_truth::Study s;
  s.class_names = split().class_names;
  auto convert = [](const data::MisclassifiedItem& it) {
    return ground_truth::StudyItem{it.item_id, it.query, it.predicted_label, it.true_label};
  };
  for (const auto& it : sampled_items()) s.items.push_back(convert(it));
  for (const auto& it : practice_items()) s.practice_pool.push_back(convert(it));
  return s;
}

StageInfo Pipeline::prototypes() {
  const json inputs = {{"data", data_fingerprint()},
                       {"per_class", manifest_.prototypes_per_class},
                       {"squared_kernel", manifest_.squared_kernel}};
  return run_stage("prototypes", inputs, [&](const fs::path& dir, json& summary) {
    const auto set = prototypes::select_prototypes(split(), manifest_.prototypes_per_class, manifest_.squared_kernel);
    write_json(dir / "prototypes.json", prototypes::to_json(set));
    const auto nn = prototypes::prototype_1nn_classify(set, data::scaled_all<double>(split().test_images),
                                                       split().test_labels);
    summary["test_accuracy_1nn"] = nn.accuracy;
    json gammas = json::array();
    for (const auto& c : set.classes) gammas.push_back(c.kernel.gamma);
    summary["gamma"] = gammas;
  });
}

const prototypes::PrototypeSet& Pipeline::prototype_set() {
  const auto st = prototypes();
  if (!prototypes_) prototypes_ = prototypes::prototypes_from_json(read_json(st.dir / "prototypes.json"), split());
  return *prototypes_;
}

// ---------------------------------------------------------------------------
// Explanations

StageInfo Pipeline::explain(cf::Method method) {
  const auto clf = classifier();
  const auto smp = sample();
  json inputs = {{"classifier", clf.key}, {"sample", smp.key}, {"method", cf::to_string(method)}};
  switch (method) {
    case cf::Method::MinEdit: inputs["config"] = manifest_.minedit; break;
    case cf::Method::Cem:
      inputs["config"] = manifest_.cem;
      inputs["autoencoder"] = dataset_autoencoder().key;
      break;
    case cf::Method::Vlk:
      inputs["config"] = manifest_.vlk;
      inputs["autoencoder"] = dataset_autoencoder().key;
      break;
    case cf::Method::Revise:
      inputs["config"] = manifest_.revise;
      inputs["vae"] = vae().key;
      break;
  }
  return run_stage("explain_" + cf::to_string(method), inputs, [&](const fs::path& dir, json& summary) {
    const auto& model = classifier_model();
    const auto items = sampled_items();
    std::optional<cf::Autoencoder> ae;
    std::optional<cf::Vae> gen;
    if (method == cf::Method::Cem || method == cf::Method::Vlk)
      ae = models::Autoencoder<float>::from_checkpoint(
               nn::load_checkpoint((dataset_autoencoder().dir / "autoencoder.ckpt").string()))
               .cast<double>();
    if (method == cf::Method::Revise)
      gen = models::VariationalAutoencoder<float>::from_checkpoint(
                nn::load_checkpoint((vae().dir / "vae.ckpt").string()))
                .cast<double>();
    std::map<int, Mat<double>> codes;

    std::vector<Image> images;
    json results = json::array();
    int valid = 0, failed = 0;
    for (const auto& item : items) {
      const auto req = cf::make_request(item, method);
      cf::CounterfactualResult r;
      switch (method) {
        case cf::Method::MinEdit: r = cf::generate_min_edit(req, model, manifest_.minedit); break;
        case cf::Method::Cem: r = cf::generate_cem_pn(req, model, *ae, manifest_.cem); break;
        case cf::Method::Vlk: {
          auto it = codes.find(req.target_class);
          if (it == codes.end()) {
            const auto idx = split().train_indices_of(req.target_class);
            it = codes.emplace(req.target_class, ae->encode(data::scaled_columns<double>(split().train_images, idx)))
                     .first;
          }
          r = cf::generate_vlk(req, model, *ae, it->second, manifest_.vlk);
          break;
        }
        case cf::Method::Revise: r = cf::generate_revise(req, model, *gen, manifest_.revise); break;
      }
      json j = cf::result_to_json(r);
      if (r.image) {
        j["image_index"] = images.size();
        images.push_back(*r.image);
      } else {
        j["image_index"] = nullptr;
      }
      (r.valid ? valid : failed) += 1;
      results.push_back(j);
    }
    write_images((dir / "images.bin").string(), images);
    write_json(dir / "results.json", results);
    summary["valid"] = valid;
    summary["failed"] = failed;
    log("explain " + cf::to_string(method) + ": " + std::to_string(valid) + " valid, " + std::to_string(failed) +
        " failed");
  });
}

// ---------------------------------------------------------------------------
// Ground truth

StageInfo Pipeline::oracle() {
  const json inputs = {{"classifier", classifier().key},
                       {"sample", sample().key},
                       {"prototypes", prototypes().key},
                       {"tolerance", manifest_.oracle_tolerance}};
  return run_stage("oracle", inputs, [&](const fs::path& dir, json& summary) {
    const auto& model = classifier_model();
    const auto& protos = prototype_set();
    std::vector<Image> centroids;
    json edits = json::array();
    int degenerate = 0;
    for (const auto& item : sampled_items()) {
      const auto e = ground_truth::synthetic_oracle_edit(item, model, protos, manifest_.oracle_tolerance);
      // One synthetic participant per item, so the centroid is the edit itself.
      centroids.push_back(ground_truth::compute_centroid(item.item_id, {e.image}).image);
      edits.push_back({{"item_id", item.item_id},
                       {"alpha", e.alpha},
                       {"prototype_rank", e.prototype_rank},
                       {"degenerate", e.degenerate},
                       {"contributors", 1},
                       {"image_index", centroids.size() - 1}});
      degenerate += e.degenerate ? 1 : 0;
    }
    write_images((dir / "images.bin").string(), centroids);
    write_json(dir / "ground_truth.json", edits);
    summary["degenerate"] = degenerate;
  });
}

std::map<std::string, std::vector<Image>> read_session_finals(const fs::path& log_dir) {
  if (!fs::is_directory(log_dir)) throw Error("session log directory " + log_dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(log_dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<Image>> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::map<std::string, Image> last;  // per item within this session
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json ev = json::parse(line);
      if (ev.value("event", "") != "submit" || ev.value("practice", false)) continue;
      last[ev.at("item_id").get<std::string>()] = ground_truth::pixels_from_json(ev.at("final_pixels"));
    }
    for (auto& [item, image] : last) out[item].push_back(std::move(image));
  }
  return out;
}

StageInfo Pipeline::ground_truth_stage() {
  if (manifest_.ground_truth_logs.empty()) return oracle();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(manifest_.ground_truth_logs))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json hashes = json::array();
  for (const auto& f : files) hashes.push_back(sha256_file(f.string()));
  const json inputs = {{"sample", sample().key}, {"logs", hashes}};
  return run_stage("sessions", inputs, [&](const fs::path& dir, json& summary) {
    const auto finals = read_session_finals(manifest_.ground_truth_logs);
    std::vector<Image> centroids;
    json entries = json::array();
    int missing = 0;
    for (const auto& item : sampled_items()) {
      const auto it = finals.find(item.item_id);
      if (it == finals.end() || it->second.empty()) {
        entries.push_back({{"item_id", item.item_id}, {"contributors", 0}, {"image_index", nullptr}});
        ++missing;
        continue;
      }
      centroids.push_back(ground_truth::compute_centroid(item.item_id, it->second).image);
      entries.push_back({{"item_id", item.item_id},
                         {"contributors", it->second.size()},
                         {"image_index", centroids.size() - 1}});
    }
    write_images((dir / "images.bin").string(), centroids);
    write_json(dir / "ground_truth.json", entries);
    summary["items_without_submissions"] = missing;
  });
}

// ---------------------------------------------------------------------------
// Evaluation and report

StageInfo Pipeline::evaluate() {
  json inputs = {{"classifier", classifier().key},
                 {"sample", sample().key},
                 {"prototypes", prototypes().key},
                 {"class_autoencoders", class_autoencoders().key},
                 {"ground_truth", ground_truth_stage().key},
                 {"mc", manifest_.mc},
                 {"binarize", manifest_.binarize_ground_truth},
                 {"lof_reference", manifest_.lof_reference},
                 {"lof_global_per_class", manifest_.lof_global_per_class},
                 {"reference_accuracy", manifest_.reference_accuracy ? json(*manifest_.reference_accuracy) : json()}};
  json explain_keys = json::object();
  for (auto m : manifest_.methods) explain_keys[cf::to_string(m)] = explain(m).key;
  inputs["explanations"] = explain_keys;

  return run_stage("evaluate", inputs, [&](const fs::path& dir, json& summary) {
    const auto& model = classifier_model();
    const auto& protos = prototype_set();
    const auto items = sampled_items();
    const auto& sp = split();

    std::vector<cf::Autoencoder> aes;
    for (int c = 0; c < sp.num_classes(); ++c)
      aes.push_back(models::Autoencoder<float>::from_checkpoint(
                        nn::load_checkpoint((class_autoencoders().dir / ("class_" + std::to_string(c) + ".ckpt")).string()))
                        .cast<double>());

    std::set<int> targets;
    for (const auto& it : items) targets.insert(it.true_label);
    std::vector<metrics::LofModel> lofs(static_cast<std::size_t>(sp.num_classes()));
    if (manifest_.lof_reference == "global") {
      std::vector<std::size_t> idx;
      for (int c = 0; c < sp.num_classes(); ++c) {
        const auto ci = sp.train_indices_of(c);
        idx.insert(idx.end(), ci.begin(),
                   ci.begin() + std::min<std::ptrdiff_t>(manifest_.lof_global_per_class,
                                                         static_cast<std::ptrdiff_t>(ci.size())));
      }
      const metrics::LofModel global(data::scaled_columns<double>(sp.train_images, idx), metrics::kLofNeighbours);
      for (int c : targets) lofs[static_cast<std::size_t>(c)] = global;
    } else {
      for (int c : targets) {
        log("fitting LOF reference for class " + std::to_string(c));
        lofs[static_cast<std::size_t>(c)] = metrics::LofModel(
            data::scaled_columns<double>(sp.train_images, sp.train_indices_of(c)), metrics::kLofNeighbours);
      }
    }

    metrics::EvaluationContext ctx;
    ctx.classifier = &model;
    ctx.class_autoencoders = &aes;
    ctx.lof_models = &lofs;
    ctx.prototypes = &protos;
    ctx.mc = manifest_.mc;

    // source -> item_id -> (image or failure reason)
    struct Entry {
      std::optional<Image> image;
      std::string reason;
    };
    std::vector<std::string> sources;
    std::map<std::string, std::map<std::string, Entry>> table;
    for (auto m : manifest_.methods) {
      const auto st = explain(m);
      const auto images = read_images((st.dir / "images.bin").string());
      const std::string src = cf::to_string(m);
      sources.push_back(src);
      for (const auto& j : read_json(st.dir / "results.json")) {
        Entry e;
        if (!j.at("image_index").is_null()) e.image = images.at(j.at("image_index").get<std::size_t>());
        else e.reason = j.value("note", "FAILURE");
        table[src][j.at("item_id").get<std::string>()] = e;
      }
    }
    {
      const auto st = ground_truth_stage();
      const auto images = read_images((st.dir / "images.bin").string());
      sources.push_back(kGroundTruthSource);
      for (const auto& j : read_json(st.dir / "ground_truth.json")) {
        Entry e;
        if (!j.at("image_index").is_null()) e.image = images.at(j.at("image_index").get<std::size_t>());
        else e.reason = "no submissions";
        table[kGroundTruthSource][j.at("item_id").get<std::string>()] = e;
      }
    }

    json records = json::array();
    std::map<std::string, std::pair<std::vector<Image>, std::vector<int>>> covered;
    for (const auto& item : items)
      for (const auto& src : sources) {
        const auto found = table[src].find(item.item_id);
        const Entry e = found == table[src].end() ? Entry{std::nullopt, "missing"} : found->second;
        ctx.binarize = src == kGroundTruthSource && manifest_.binarize_ground_truth;
        const auto rec = metrics::evaluate(ctx, item.item_id, src, item.query, item.predicted_label, item.true_label,
                                           e.image, e.reason);
        records.push_back(metrics::to_json(rec));
        if (rec.covered) {
          covered[src].first.push_back(*e.image);
          covered[src].second.push_back(item.true_label);
        }
      }

    const double a_ref = manifest_.reference_accuracy
                             ? *manifest_.reference_accuracy
                             : read_json(prototypes().dir / "stage.json").at("summary").at("test_accuracy_1nn").get<double>();
    const Mat<double> test = data::scaled_all<double>(sp.test_images);
    json sub = json::object();
    for (const auto& src : sources) {
      const auto it = covered.find(src);
      if (it == covered.end() || it->second.first.empty()) {
        sub[src] = nullptr;
        continue;
      }
      sub[src] = metrics::substitutability(it->second.first, it->second.second, test, sp.test_labels, a_ref);
    }
    write_json(dir / "records.json", records);
    write_json(dir / "substitutability.json",
               {{"reference_accuracy", a_ref}, {"sources", sources}, {"values", sub}});
    summary["records"] = records.size();
  });
}

StageInfo Pipeline::report() {
  const auto ev = evaluate();
  json config = {{"dataset", manifest_.dataset},
                 {"seed", manifest_.seed},
                 {"items", manifest_.items},
                 {"minedit", manifest_.minedit},
                 {"cem", manifest_.cem},
                 {"vlk", manifest_.vlk},
                 {"revise", manifest_.revise},
                 {"mc", manifest_.mc},
                 {"prototypes_per_class", manifest_.prototypes_per_class},
                 {"squared_kernel", manifest_.squared_kernel},
                 {"oracle_tolerance", manifest_.oracle_tolerance},
                 {"binarize_ground_truth", manifest_.binarize_ground_truth},
                 {"lof_reference", manifest_.lof_reference},
                 {"welch", manifest_.welch},
                 {"ground_truth", manifest_.ground_truth_logs.empty() ? "synthetic_oracle" : "sessions"}};
  const json inputs = {{"evaluate", ev.key}, {"config", config}};
  const auto st = run_stage("report", inputs, [&](const fs::path& dir, json& summary) {
    ReportInput in;
    in.dataset = manifest_.dataset;
    for (const auto& it : sampled_items()) in.item_ids.push_back(it.item_id);
    const json sub = read_json(ev.dir / "substitutability.json");
    in.sources = sub.at("sources").get<std::vector<std::string>>();
    in.reference_accuracy = sub.at("reference_accuracy").get<double>();
    for (const auto& [src, v] : sub.at("values").items())
      in.substitutability[src] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    for (const auto& j : read_json(ev.dir / "records.json")) in.records.push_back(metrics::record_from_json(j));
    in.welch = manifest_.welch;
    in.config = config;
    const auto files = render_report(in);
    fs::create_directories(dir / "report");
    for (const auto& [name, text] : files) write_text_atomic((dir / "report" / name).string(), text);
    summary["files"] = files.size();
  });

  const fs::path report_dir = out_ / "report";
  fs::remove_all(report_dir);
  fs::create_directories(report_dir);
  for (const auto& e : fs::directory_iterator(st.dir / "report"))
    fs::copy_file(e.path(), report_dir / e.path().filename(), fs::copy_options::overwrite_existing);

  // Resolved manifest with provenance; kept outside the report so the report
  // bytes do not depend on wall-clock time.
  json resolved;
  to_json(resolved, manifest_);
  json stages = json::object();
  for (const auto& h : history_) stages[h.name] = {{"key", h.key}, {"dir", h.dir.string()}};
  resolved["stages"] = stages;
  json ckpt = json::object();
  ckpt["classifier"] = sha256_file((classifier().dir / "classifier.ckpt").string());
  for (int c = 0; c < split().num_classes(); ++c) {
    const std::string name = "class_" + std::to_string(c) + ".ckpt";
    ckpt["class_autoencoder_" + std::to_string(c)] = sha256_file((class_autoencoders().dir / name).string());
  }
  if (done_.count("dataset_autoencoder"))
    ckpt["dataset_autoencoder"] = sha256_file((done_["dataset_autoencoder"].dir / "autoencoder.ckpt").string());
  if (done_.count("vae")) ckpt["vae"] = sha256_file((done_["vae"].dir / "vae.ckpt").string());
  resolved["checkpoint_sha256"] = ckpt;
  json ids = json::array();
  for (const auto& it : sampled_items()) ids.push_back(it.item_id);
  resolved["item_ids"] = ids;
  resolved["reference_accuracy_used"] = read_json(evaluate().dir / "substitutability.json").at("reference_accuracy");
  resolved["prototype_1nn_accuracy"] =
      read_json(prototypes().dir / "stage.json").at("summary").at("test_accuracy_1nn");
  resolved["created_at"] = ground_truth::iso8601_now();
  write_json(out_ / "run_manifest.json", resolved);
  return st;
}

StageInfo Pipeline::run_all() {
  classifier();
  sample();
  prototypes();
  class_autoencoders();
  for (auto m : manifest_.methods) explain(m);
  ground_truth_stage();
  evaluate();
  return report();
}

}  // namespace cfbench::study
