#include <memory>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

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

namespace py = pybind11;
using namespace memeify;
using nlohmann::json;

namespace {

py::object to_python(const json& value) { return py::module_::import("json").attr("loads")(value.dump()); }

json record_json(const corpus::MemeRecord& r) {
  return {{"id", r.id},
          {"class", r.class_name},
          {"caption_top", r.caption_top},
          {"caption_bottom", r.caption_bottom},
          {"image", r.image_ref ? json(*r.image_ref) : json(nullptr)}};
}

py::object records_to_python(const std::vector<corpus::MemeRecord>& records) {
  json out = json::array();
  for (const auto& r : records) out.push_back(record_json(r));
  return to_python(out);
}

json caption_json(const captiongen::GeneratedCaption& c) {
  return {{"class", c.class_name}, {"top", c.top},           {"bottom", c.bottom},
          {"seed", c.seed},        {"model_id", c.model_id}, {"digest", c.digest()}};
}

class CaptionModel {
public:
  explicit CaptionModel(captiongen::ClassConditionedLM model)
      : model_(std::make_shared<captiongen::ClassConditionedLM>(std::move(model))) {}

  static CaptionModel load(const std::string& path) { return CaptionModel(captiongen::ClassConditionedLM::load(path)); }
  void save(const std::string& path) const { model_->save(path); }
  const std::string& id() const { return model_->id(); }
  std::vector<std::string> classes() const { return model_->classes(); }

  py::object generate(const std::string& class_name, std::uint64_t seed, double temperature,
                      std::size_t max_tokens) const {
    captiongen::GenerateOptions options;
    options.temperature = temperature;
    options.max_tokens = max_tokens;
    return to_python(caption_json(captiongen::generate(*model_, class_name, seed, options)));
  }

  double perplexity(const std::string& corpus_path) const {
    const auto corpus = corpus::read_corpus(corpus_path);
    return captiongen::perplexity(*model_, corpus.records);
  }

private:
  std::shared_ptr<captiongen::ClassConditionedLM> model_;
};

class Server {
public:
  Server(const std::string& config_path, std::optional<int> port) {
    auto config = service::load_service_config(config_path);
    if (port) config.port = *port;
    auto artifacts = service::load_artifacts(config);
    service_ = std::make_unique<service::MemeService>(config, std::move(artifacts));
    http_ = std::make_unique<service::HttpServer>(*service_);
    port_ = http_->bind(config.listen_address, config.port);
    http_->start();
  }

  int port() const { return port_; }

  void stop() {
    if (http_) http_->stop();
    http_.reset();
    service_.reset();
  }

  py::object counters() const {
    if (!service_) throw Error("server is stopped");
    const auto c = service_->counters();
    return to_python({{"request_generations", c.request_generations},
                      {"background_generations", c.background_generations},
                      {"cache_hits", c.cache.hits},
                      {"cache_misses", c.cache.misses},
                      {"sessions", c.sessions}});
  }

private:
  std::unique_ptr<service::MemeService> service_;
  std::unique_ptr<service::HttpServer> http_;
  int port_ = 0;
};

}  // namespace

PYBIND11_MODULE(_memeify, m) {
  m.doc() = "memeify core bindings";

  static py::exception<MissingInputError> missing_input(m, "MissingInputError", PyExc_FileNotFoundError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const MissingInputError& e) {
      PyErr_SetString(missing_input.ptr(), e.what());
    }
  });

  m.def("read_corpus", [](const std::string& path) { return records_to_python(corpus::read_corpus(path).records); },
        py::arg("path"), "Records of a JSON-lines corpus as dicts.");

  m.def(
      "corpus_stats",
      [](const std::string& path) {
        const auto stats = corpus::read_corpus(path).stats;
        return to_python({{"record_count", stats.record_count},
                          {"class_count", stats.class_count},
                          {"per_class_counts", stats.per_class_counts}});
      },
      py::arg("path"));

  m.def(
      "stratified_sample",
      [](const std::string& path, std::size_t n, std::uint64_t seed, bool strict) {
        const auto corpus = corpus::read_corpus(path);
        return records_to_python(corpus::stratified_sample(corpus.records, n, seed, strict).records);
      },
      py::arg("path"), py::arg("n"), py::arg("seed"), py::arg("strict") = false);

  m.def(
      "caption_vector",
      [](const std::string& caption, const std::map<std::string, std::vector<float>>& table) {
        if (table.empty()) throw Error("empty embedding table");
        embeddings::EmbeddingTable t(table.begin()->second.size());
        for (const auto& [word, values] : table) t.insert(word, values);
        return embeddings::caption_vector(caption, t);
      },
      py::arg("caption"), py::arg("table"), "Mean embedding of the in-vocabulary tokens.");

  m.def(
      "kmeans",
      [](const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
        const auto r = themes::kmeans(points, k, seed, max_iters);
        return to_python({{"centroids", r.centroids},
                          {"assignments", r.assignments},
                          {"objective_history", r.objective_history},
                          {"iterations", r.iterations},
                          {"converged", r.converged}});
      },
      py::arg("points"), py::arg("k"), py::arg("seed"), py::arg("max_iters") = 100);

  m.def(
      "cluster",
      [](const std::string& vectors_path, const std::string& names_path, std::size_t k, std::uint64_t seed,
         double purity, std::size_t restarts) {
        themes::ThemeBuildOptions options;
        options.k = k;
        options.seed = seed;
        options.purity = purity;
        options.restarts = restarts;
        const auto vectors = embeddings::read_vectors(vectors_path);
        const auto rules = themes::load_name_config(names_path);
        return to_python(themes::build_theme_model(vectors, options, rules).model.to_json());
      },
      py::arg("vectors"), py::arg("names"), py::arg("k"), py::arg("seed"), py::arg("purity") = 0.90,
      py::arg("restarts") = 10,
      "Theme model (as a dict) for a caption-vector file.");

  py::class_<CaptionModel>(m, "CaptionModel")
      .def_static("load", &CaptionModel::load, py::arg("path"))
      .def("save", &CaptionModel::save, py::arg("path"))
      .def_property_readonly("id", &CaptionModel::id)
      .def_property_readonly("classes", &CaptionModel::classes)
      .def("generate", &CaptionModel::generate, py::arg("class_name"), py::arg("seed"), py::arg("temperature") = 1.0,
           py::arg("max_tokens") = 32)
      .def("perplexity", &CaptionModel::perplexity, py::arg("corpus"));

  m.def(
      "train",
      [](const std::string& corpus_path, std::size_t order, double smoothing) {
        const auto corpus = corpus::read_corpus(corpus_path);
        return CaptionModel(captiongen::train_lm(corpus.records, order, smoothing));
      },
      py::arg("corpus"), py::arg("order") = 3, py::arg("smoothing") = captiongen::kDefaultSmoothing);

  m.def(
      "extract_features", [](const std::string& path) { return imageindex::extract_features(read_image(path)); },
      py::arg("image"));

  m.def(
      "load_class_images",
      [](const std::string& dir) {
        std::vector<std::string> names;
        for (const auto& [name, image] : service::load_class_images(dir)) names.push_back(name);
        return names;
      },
      py::arg("directory"), "Class names of the images in a directory.");

  py::class_<imageindex::LshIndex>(m, "LshIndex")
      .def_static("load", &imageindex::LshIndex::load, py::arg("path"))
      .def("save", &imageindex::LshIndex::save, py::arg("path"))
      .def_property_readonly("bits", &imageindex::LshIndex::bits)
      .def_property_readonly("tables", &imageindex::LshIndex::tables)
      .def("__len__", &imageindex::LshIndex::size)
      .def(
          "lookup",
          [](const imageindex::LshIndex& index, const std::vector<double>& query, bool rerank) {
            const auto r = index.lookup(query, rerank);
            return to_python({{"class", r.class_name},
                              {"similarity", r.similarity},
                              {"fallback", r.fallback},
                              {"candidates", r.candidate_count}});
          },
          py::arg("query"), py::arg("rerank") = true);

  m.def(
      "build_index",
      [](const std::string& dir, int bits, int tables, std::uint64_t seed) {
        return imageindex::build_index(service::load_class_images(dir), bits, tables, seed);
      },
      py::arg("images"), py::arg("bits") = 16, py::arg("tables") = 8, py::arg("seed"));

  m.def(
      "render",
      [](const std::string& image, const std::string& top, const std::string& bottom, const std::string& out) {
        write_png(render::render(read_image(image), top, bottom).image, out);
      },
      py::arg("image"), py::arg("top"), py::arg("bottom") = "", py::arg("out"));

  m.def(
      "metrics",
      [](std::uint64_t tp, std::uint64_t fn, std::uint64_t fp, std::uint64_t tn) {
        return to_python(evalkit::to_json(evalkit::metrics({tp, fn, fp, tn})));
      },
      py::arg("tp"), py::arg("fn"), py::arg("fp"), py::arg("tn"));

  m.def(
      "reconstruct_matrix",
      [](double precision, double recall, double accuracy, std::uint64_t n_pos, std::uint64_t n_neg,
         double tolerance) {
        return to_python(evalkit::to_json(
            evalkit::reconstruct_matrix(precision, recall, accuracy, n_pos, n_neg, tolerance)));
      },
      py::arg("precision"), py::arg("recall"), py::arg("accuracy"), py::arg("positives"), py::arg("negatives"),
      py::arg("tolerance") = 0.01);

  py::class_<Server>(m, "Server", "The HTTP API running on a background thread.")
      .def(py::init<const std::string&, std::optional<int>>(), py::arg("config"), py::arg("port") = py::none())
      .def_property_readonly("port", &Server::port)
      .def("counters", &Server::counters)
      .def("stop", &Server::stop, py::call_guard<py::gil_scoped_release>())
      .def("__enter__", [](Server& s) -> Server& { return s; }, py::return_value_policy::reference)
      .def("__exit__", [](Server& s, py::args) { s.stop(); });
}
