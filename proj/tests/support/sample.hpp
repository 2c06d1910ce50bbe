#pragma once

// Artifacts built in memory from the bundled sample data, the same way the
// CLI pipeline builds them.

#include <string>

#include "memeify/captiongen.hpp"
#include "memeify/corpus.hpp"
#include "memeify/embeddings.hpp"
#include "memeify/imageindex.hpp"
#include "memeify/service.hpp"
#include "memeify/themes.hpp"

namespace sample {

inline std::string path(const std::string& name) { return std::string(MEMEIFY_SOURCE_DIR) + "/data/sample/" + name; }

inline const memeify::service::Artifacts& artifacts() {
  using namespace memeify;
  static const service::Artifacts built = [] {
    service::Artifacts a;
    const auto corpus = corpus::read_corpus(path("corpus.jsonl"));
    const auto table = embeddings::load_embeddings(path("embeddings.txt"));
    const auto vectors = embeddings::embed_corpus(corpus.records, table);
    themes::ThemeBuildOptions options;
    options.k = 5;
    options.seed = 7;
    a.themes = std::make_shared<const themes::ThemeModel>(
        themes::build_theme_model(vectors, options, themes::load_name_config(path("theme_names.conf"))).model);
    a.language_model = std::make_shared<const captiongen::ClassConditionedLM>(captiongen::train_lm(corpus.records));
    auto images = service::load_class_images(path("images"));
    a.index = std::make_shared<const imageindex::LshIndex>(imageindex::build_index(images, 16, 8, 3));
    a.class_images = std::make_shared<const std::map<std::string, Image>>(std::move(images));
    return a;
  }();
  return built;
}

inline memeify::service::ServiceConfig quiet_config(std::uint64_t seed = 1) {
  memeify::service::ServiceConfig c;
  c.seed = seed;
  c.background_refill = false;
  return c;
}

}  // namespace sample
