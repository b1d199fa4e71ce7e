#include "cfbench/study/pipeline.hpp"
#include "cfbench/study/server.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace cfbench;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool quiet = false;
};

study::RunManifest resolve_manifest(const Globals& g) {
  study::RunManifest m = g.config.empty() ? study::default_manifest("mnist") : study::load_manifest(g.config);
  if (g.seed) m.seed = *g.seed;
  m.validate();
  return m;
}

study::Pipeline make_pipeline(const Globals& g) {
  models::Logger log;
  if (!g.quiet) log = [](const std::string& line) { std::cerr << line << std::endl; };
  return study::Pipeline(resolve_manifest(g), g.out, log);
}

void print_stage(const study::StageInfo& s) {
  std::cout << s.name << ' ' << s.dir.string() << (s.reused ? " (reused)" : "") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanation benchmark: generate, collect and evaluate explanations of misclassified images"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run manifest (JSON); defaults to the built-in MNIST manifest");
  app.add_option("--seed", g.seed, "Override the manifest seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  auto* train = app.add_subcommand("train", "Train the classifier and the autoencoders the manifest enables");
  std::string which = "all";
  train->add_option("--model", which, "classifier, class_autoencoders, dataset_autoencoder, vae or all")
      ->check(CLI::IsMember({"classifier", "class_autoencoders", "dataset_autoencoder", "vae", "all"}))
      ->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Sample misclassified test items");
  auto* explain = app.add_subcommand("explain", "Generate counterfactuals for the sampled items");
  std::string method = "all";
  explain->add_option("--method", method, "minedit, cem, vlk, revise or all")
      ->check(CLI::IsMember({"minedit", "cem", "vlk", "revise", "all"}))
      ->capture_default_str();
  auto* protos = app.add_subcommand("prototypes", "Select MMD prototypes and report their 1-NN accuracy");
  auto* oracle = app.add_subcommand("oracle-edit", "Produce synthetic ground-truth edits");
  auto* evaluate = app.add_subcommand("evaluate", "Score every explanation");
  auto* report = app.add_subcommand("report", "Render CSV tables, statistics and plots");
  auto* run = app.add_subcommand("run", "Run every stage");

  auto* studycmd = app.add_subcommand("study", "Ground-truth collection");
  studycmd->require_subcommand(1);
  auto* serve = studycmd->add_subcommand("serve", "Serve the editing study over HTTP");
  int port = 8080;
  std::string host = "127.0.0.1", log_dir, static_dir;
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--log-dir", log_dir, "Session log directory (default <out>/sessions)");
  serve->add_option("--static", static_dir, "Directory with the built editor UI to serve at /");

  CLI11_PARSE(app, argc, argv);

  try {
    auto p = make_pipeline(g);
    const auto& m = p.manifest();
    if (train->parsed()) {
      if (which == "classifier" || which == "all") print_stage(p.classifier());
      if (which == "class_autoencoders" || which == "all") print_stage(p.class_autoencoders());
      if (which == "dataset_autoencoder" || (which == "all" && m.dataset_autoencoder))
        print_stage(p.dataset_autoencoder());
      if (which == "vae" || (which == "all" && m.vae)) print_stage(p.vae());
    } else if (sample->parsed()) {
      print_stage(p.sample());
    } else if (explain->parsed()) {
      if (method == "all") {
        for (auto mm : m.methods) print_stage(p.explain(mm));
      } else {
        print_stage(p.explain(cf::method_from_string(method)));
      }
    } else if (protos->parsed()) {
      print_stage(p.prototypes());
    } else if (oracle->parsed()) {
      print_stage(p.oracle());
    } else if (evaluate->parsed()) {
      print_stage(p.evaluate());
    } else if (report->parsed()) {
      print_stage(p.report());
      std::cout << "report written to " << (p.out_dir() / "report").string() << '\n';
    } else if (run->parsed()) {
      p.run_all();
      for (const auto& s : p.history()) print_stage(s);
      std::cout << "report written to " << (p.out_dir() / "report").string() << '\n';
    } else if (serve->parsed()) {
      ground_truth::SessionStore store(p.study(), log_dir.empty() ? (p.out_dir() / "sessions").string() : log_dir);
      std::cerr << "serving study on http://" << host << ':' << port << std::endl;
      study::serve_api(store, host, port, static_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
