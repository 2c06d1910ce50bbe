// memeify: command-line entry point for every pipeline stage.
//
// Exit status: 0 success, 1 stage failure, 2 usage error, 3 missing input.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memeify/captiongen.hpp"
#include "memeify/corpus.hpp"
#include "memeify/embeddings.hpp"
#include "memeify/evalkit.hpp"
#include "memeify/http_server.hpp"
#include "memeify/image.hpp"
#include "memeify/imageindex.hpp"
#include "memeify/renderer.hpp"
#include "memeify/service.hpp"
#include "memeify/themes.hpp"

namespace {

using namespace memeify;
using nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissingInput = 3;

class UsageError : public Error {
public:
  using Error::Error;
};

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing " + path);
}

void write_json(const std::string& path, const json& value) { write_file(path, value.dump(2) + "\n"); }

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  return in;
}

json stats_json(const corpus::CorpusStats& stats) {
  return {{"record_count", stats.record_count},
          {"class_count", stats.class_count},
          {"per_class_counts", stats.per_class_counts}};
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input, stats_out, sample_out;
  std::optional<std::size_t> sample;
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

void run_ingest(const IngestArgs& a) {
  if (a.sample && (!a.seed || a.sample_out.empty())) {
    throw UsageError("--sample requires --seed and --sample-out");
  }
  const auto corpus = corpus::read_corpus(a.input);
  write_json(a.stats_out, stats_json(corpus.stats));
  std::cerr << "ingested " << corpus.stats.record_count << " records in " << corpus.stats.class_count
            << " classes\n";
  if (a.sample) {
    const auto sample = corpus::stratified_sample(corpus.records, *a.sample, *a.seed, a.strict);
    std::ostringstream out;
    corpus::write_corpus(out, sample.records);
    write_file(a.sample_out, out.str());
    for (const auto& cls : sample.dropped_classes) std::cerr << "warning: class '" << cls << "' has no sampled records\n";
  }
}

struct EmbedArgs {
  std::string table, corpus, out;
};

void run_embed(const EmbedArgs& a) {
  std::vector<std::string> warnings;
  const auto table = embeddings::load_embeddings(a.table, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  const auto corpus = corpus::read_corpus(a.corpus);
  std::vector<std::string> skipped;
  const auto vectors = embeddings::embed_corpus(corpus.records, table, &skipped);
  for (const auto& id : skipped) std::cerr << "warning: record " << id << " has no in-vocabulary token; skipped\n";
  if (vectors.empty()) throw Error("no caption could be embedded");
  std::ostringstream out;
  embeddings::write_vectors(out, vectors);
  write_file(a.out, out.str());
  std::cerr << "embedded " << vectors.size() << " of " << corpus.records.size() << " captions\n";
}

struct ClusterArgs {
  std::string vectors, names, out, assignments_out;
  themes::ThemeBuildOptions options;
  std::uint64_t seed = 0;
  std::optional<double> residual_quantile;
};

void run_cluster(ClusterArgs a) {
  const auto vectors = embeddings::read_vectors(a.vectors);
  const auto rules = themes::load_name_config(a.names);
  a.options.seed = a.seed;
  a.options.residual_quantile = a.residual_quantile;
  const auto build = themes::build_theme_model(vectors, a.options, rules);
  themes::save_theme_model(build.model, a.out);
  if (!a.assignments_out.empty()) {
    std::ostringstream out;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const auto& c = build.assignments[i].cluster;
      out << json{{"id", vectors[i].id},
                  {"class", vectors[i].class_name},
                  {"cluster", c ? json(*c) : json(nullptr)},
                  {"theme", c ? json(build.model.theme_names[*c]) : json(build.model.residual_theme)}}
                 .dump()
          << '\n';
    }
    write_file(a.assignments_out, out.str());
  }
  std::cout << json(themes::theme_summary(build.model.class_to_theme)).dump() << '\n';
}

struct TrainArgs {
  std::string corpus, out;
  std::size_t order = 3;
  double smoothing = captiongen::kDefaultSmoothing;
};

void run_train(const TrainArgs& a) {
  const auto corpus = corpus::read_corpus(a.corpus);
  const auto model = captiongen::train_lm(corpus.records, a.order, a.smoothing);
  model.save(a.out);
  std::cerr << "trained order-" << a.order << " model over " << model.classes().size() << " classes, vocabulary "
            << model.vocabulary().size() << ", id " << model.id() << '\n';
}

struct IndexArgs {
  std::string images, out;
  int bits = 16;
  int tables = 8;
  std::uint64_t seed = 0;
};

void run_index(const IndexArgs& a) {
  const auto images = service::load_class_images(a.images);
  if (images.empty()) throw Error("no class images found in " + a.images);
  imageindex::build_index(images, a.bits, a.tables, a.seed).save(a.out);
  std::cerr << "indexed " << images.size() << " class images\n";
}

struct RenderArgs {
  std::string image, top, bottom, out;
};

void run_render(const RenderArgs& a) {
  const auto base = read_image(a.image);
  const auto rendered = render::render(base, a.top, a.bottom);
  const auto png = encode_png(rendered.image);
  write_file(a.out, {reinterpret_cast<const char*>(png.data()), png.size()});
}

struct GenerateArgs {
  std::string model, class_name, image, out;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::size_t count = 1;
};

void run_generate(const GenerateArgs& a) {
  if (!a.out.empty() && a.image.empty()) throw UsageError("--out requires --image");
  if (a.count == 0) throw UsageError("--count must be positive");
  const auto model = captiongen::ClassConditionedLM::load(a.model);
  captiongen::GenerateOptions options;
  options.temperature = a.temperature;
  std::optional<Image> base;
  if (!a.image.empty()) base = read_image(a.image);
  for (std::size_t i = 0; i < a.count; ++i) {
    // The first caption uses --seed itself so single runs are easy to replay.
    const std::uint64_t seed = i == 0 ? a.seed : Rng::derive(a.seed, {i}).next_u64();
    const auto caption = captiongen::generate(model, a.class_name, seed, options);
    std::cout << json{{"class", caption.class_name},
                      {"top", caption.top},
                      {"bottom", caption.bottom},
                      {"seed", caption.seed},
                      {"model_id", caption.model_id},
                      {"digest", caption.digest()}}
                     .dump()
              << '\n';
    if (base && i == 0) {
      const auto png = render::render_meme(*base, caption);
      write_file(a.out, {reinterpret_cast<const char*>(png.data()), png.size()});
    }
  }
}

struct ServeArgs {
  std::string config;
  std::optional<int> port;
};

void run_serve(const ServeArgs& a) {
  auto config = service::load_service_config(a.config);
  if (a.port) config.port = *a.port;

  // Block the stop signals before any thread starts so sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto artifacts = service::load_artifacts(config);
  service::MemeService svc(config, std::move(artifacts));
  service::HttpServer server(svc);
  const int port = server.bind(config.listen_address, config.port);
  server.start();
  std::cout << "listening on http://" << config.listen_address << ":" << port << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  std::cerr << "stopped\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string cm, csv;
  double precision = 0, recall = 0, accuracy = 0;
  std::uint64_t positives = 0, negatives = 0;
  double tolerance = 0.01;
};

evalkit::ConfusionMatrix parse_cm(const std::string& text) {
  std::vector<std::uint64_t> values;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      values.push_back(static_cast<std::uint64_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--cm expects four non-negative integers tp,fn,fp,tn");
    }
  }
  if (values.size() != 4) throw UsageError("--cm expects four non-negative integers tp,fn,fp,tn");
  return {values[0], values[1], values[2], values[3]};
}

void run_eval_metrics(const EvalArgs& a) {
  const auto cm = parse_cm(a.cm);
  json out = evalkit::to_json(evalkit::metrics(cm));
  out["confusion_matrix"] = evalkit::to_json(cm);
  out["misclassification_rate"] = evalkit::misclassification_rate(cm);
  std::cout << out.dump(2) << '\n';
}

void run_eval_recover(const EvalArgs& a) {
  auto in = open_input(a.csv);
  std::cout << evalkit::to_json(evalkit::theme_recovery(evalkit::read_recovery_csv(in))).dump(2) << '\n';
}

void run_eval_ratings(const EvalArgs& a) {
  auto in = open_input(a.csv);
  std::cout << evalkit::to_json(evalkit::rating_summary(evalkit::read_ratings_csv(in))).dump(2) << '\n';
}

void run_eval_reconstruct(const EvalArgs& a) {
  const auto cm = evalkit::reconstruct_matrix(a.precision, a.recall, a.accuracy, a.positives, a.negatives, a.tolerance);
  std::cout << evalkit::to_json(cm).dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memeify: theme discovery, caption generation and meme serving"};
  app.require_subcommand(1);
  app.fallthrough(false);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a corpus and write its statistics");
  c_ingest->add_option("--input", ingest.input, "Corpus (JSON lines)")->required();
  c_ingest->add_option("--stats-out", ingest.stats_out, "Statistics JSON output")->required();
  c_ingest->add_option("--sample", ingest.sample, "Draw a class-stratified sample of this size");
  c_ingest->add_option("--seed", ingest.seed, "Sampling seed");
  c_ingest->add_option("--sample-out", ingest.sample_out, "Sample corpus output");
  c_ingest->add_flag("--strict", ingest.strict, "Fail when a class receives no sampled record");

  EmbedArgs embed;
  auto* c_embed = app.add_subcommand("embed", "Average word embeddings of every caption");
  c_embed->add_option("--table", embed.table, "Embedding table (word v1 ... vd)")->required();
  c_embed->add_option("--corpus", embed.corpus, "Corpus (JSON lines)")->required();
  c_embed->add_option("--out", embed.out, "Caption vectors output (JSON lines)")->required();

  ClusterArgs cluster;
  auto* c_cluster = app.add_subcommand("cluster", "Cluster caption vectors into themes");
  c_cluster->add_option("--vectors", cluster.vectors, "Caption vectors (JSON lines)")->required();
  c_cluster->add_option("--k", cluster.options.k, "Number of clusters")->capture_default_str();
  c_cluster->add_option("--seed", cluster.seed, "Clustering seed")->required();
  c_cluster->add_option("--names", cluster.names, "Cluster naming config")->required();
  c_cluster->add_option("--out", cluster.out, "Theme model output (JSON)")->required();
  c_cluster->add_option("--purity", cluster.options.purity, "Class purity threshold")->capture_default_str();
  c_cluster->add_option("--max-iters", cluster.options.max_iters, "Lloyd iteration cap")->capture_default_str();
  c_cluster->add_option("--restarts", cluster.options.restarts, "Independent k-means++ seedings")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_cluster->add_option("--residual-quantile", cluster.residual_quantile,
                        "Flag memes beyond this centroid-distance quantile as residual");
  c_cluster->add_option("--assignments-out", cluster.assignments_out, "Per-meme cluster assignments (JSON lines)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train the class-conditioned caption model");
  c_train->add_option("--corpus", train.corpus, "Corpus (JSON lines)")->required();
  c_train->add_option("--order", train.order, "N-gram order")->capture_default_str();
  c_train->add_option("--smoothing", train.smoothing, "Additive smoothing constant")->capture_default_str();
  c_train->add_option("--out", train.out, "Model output")->required();

  IndexArgs index;
  auto* c_index = app.add_subcommand("index", "Build the LSH index over class images");
  c_index->add_option("--images", index.images, "Directory of <class>.png|jpg")->required();
  c_index->add_option("--out", index.out, "Index output")->required();
  c_index->add_option("--bits", index.bits, "Hyperplanes per table")->capture_default_str();
  c_index->add_option("--tables", index.tables, "Hash tables")->capture_default_str();
  c_index->add_option("--seed", index.seed, "Hyperplane seed")->required();

  RenderArgs rend;
  auto* c_render = app.add_subcommand("render", "Draw captions onto an image");
  c_render->add_option("--image", rend.image, "Base image (PNG or JPEG)")->required();
  c_render->add_option("--top", rend.top, "Top caption")->required();
  c_render->add_option("--bottom", rend.bottom, "Bottom caption");
  c_render->add_option("--out", rend.out, "PNG output")->required();

  GenerateArgs gen;
  auto* c_generate = app.add_subcommand("generate", "Sample captions for a class");
  c_generate->add_option("--model", gen.model, "Caption model")->required();
  c_generate->add_option("--class", gen.class_name, "Meme class")->required();
  c_generate->add_option("--seed", gen.seed, "Sampling seed")->required();
  c_generate->add_option("--temperature", gen.temperature, "Sampling temperature")->capture_default_str();
  c_generate->add_option("--count", gen.count, "Number of captions")->capture_default_str();
  c_generate->add_option("--image", gen.image, "Render the first caption onto this image");
  c_generate->add_option("--out", gen.out, "PNG output for --image");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP API");
  c_serve->add_option("--config", serve.config, "Service config (key = value)")->required();
  c_serve->add_option("--port", serve.port, "Override the configured port (0 picks a free one)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluation metrics");
  c_eval->require_subcommand(1);
  auto* e_metrics = c_eval->add_subcommand("metrics", "Precision, recall, accuracy, F1 from a confusion matrix");
  e_metrics->add_option("--cm", ev.cm, "tp,fn,fp,tn")->required();
  auto* e_recover = c_eval->add_subcommand("recover", "Theme recovery accuracy");
  e_recover->add_option("--csv", ev.csv, "CSV with true_theme,predicted_theme")->required();
  auto* e_ratings = c_eval->add_subcommand("ratings", "Mean ratings per theme and condition");
  e_ratings->add_option("--csv", ev.csv, "CSV with theme,condition,rating")->required();
  auto* e_reconstruct = c_eval->add_subcommand("reconstruct", "Recover a confusion matrix from reported metrics");
  e_reconstruct->add_option("--precision", ev.precision)->required();
  e_reconstruct->add_option("--recall", ev.recall)->required();
  e_reconstruct->add_option("--accuracy", ev.accuracy)->required();
  e_reconstruct->add_option("--positives", ev.positives)->required();
  e_reconstruct->add_option("--negatives", ev.negatives)->required();
  e_reconstruct->add_option("--tolerance", ev.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "memeify: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*c_ingest) run_ingest(ingest);
    else if (*c_embed) run_embed(embed);
    else if (*c_cluster) run_cluster(cluster);
    else if (*c_train) run_train(train);
    else if (*c_index) run_index(index);
    else if (*c_render) run_render(rend);
    else if (*c_generate) run_generate(gen);
    else if (*c_serve) run_serve(serve);
    else if (*e_metrics) run_eval_metrics(ev);
    else if (*e_recover) run_eval_recover(ev);
    else if (*e_ratings) run_eval_ratings(ev);
    else if (*e_reconstruct) run_eval_reconstruct(ev);
  } catch (const UsageError& e) {
    std::cerr << "memeify: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingInputError& e) {
    std::cerr << "memeify: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "memeify: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
