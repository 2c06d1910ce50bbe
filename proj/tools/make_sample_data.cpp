// Writes the bundled synthetic sample: a 6-class corpus (one class per
// theme), a structured embedding table, the cluster naming config, one
// base image per class and a service config.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memeify/corpus.hpp"
#include "memeify/embeddings.hpp"
#include "memeify/image.hpp"
#include "memeify/random.hpp"

namespace {

using namespace memeify;
namespace fs = std::filesystem;

struct ThemeText {
  std::string theme;
  std::string class_name;
  std::vector<std::string> tops;
  std::vector<std::string> bottoms;
};

// Stopwords get tiny embeddings so averages are dominated by content words.
const std::set<std::string> kStopwords = {"a",  "all", "and", "at", "for", "i",   "in",   "is",  "it",
                                          "me", "my",  "of",  "on", "the", "to",  "you",  "your", "when",
                                          "so", "just", "with", "that", "this", "be", "are", "no"};

const std::vector<ThemeText> kThemes = {
    {"Savage", "savage_patrick",
     {"you call that a comeback", "nobody asked for your opinion", "when they try to roast me",
      "imagine being this slow", "cute attempt at an insult", "bold words from a clown", "sit down and hush",
      "keep talking loser"},
     {"i will destroy you", "get rekt scrub", "that burn needs ice", "absolutely demolished",
      "bow to the savage king", "brutal roast incoming", "cry harder rookie", "flawless victory"}},
    {"Depressing", "sad_keanu",
     {"eating lunch alone again", "when the rain matches my mood", "another lonely night", "nobody remembered my birthday",
      "staring at the empty ceiling", "the sadness never leaves", "waiting for a call that never comes",
      "tired of everything lately"},
     {"i miss better days", "forever alone", "tears fall quietly", "just sad and tired", "empty inside again",
      "nothing matters anymore", "the gloom stays", "heavy heart heavy sigh"}},
    {"Unexpected", "surprised_pikachu",
     {"when you skip class all year", "forgot the exam was today", "touched the hot stove twice",
      "ignored every warning sign", "fed the wild bear snacks", "left the oven running overnight",
      "bet my rent on a coinflip", "jumped without checking the pool"},
     {"shocked face surprise", "wait what happened", "how could this happen", "totally unexpected plot twist",
      "gasp wow shocked", "who could have predicted", "surprise consequences arrive", "stunned and amazed"}},
    {"Frustrated", "futuruma_fry",
     {"not sure if the printer is broken", "cannot tell if wifi is down", "not sure if bug or feature",
      "cannot decide if traffic moves", "not sure if code compiles", "unsure if the meeting ended",
      "cannot tell if update finished", "not sure if deadline moved"},
     {"or just ignoring me", "or slowly losing my mind", "or everything is broken", "ugh so annoying",
      "argh why does this keep failing", "grr stuck again", "this error again seriously", "rage building slowly"}},
    {"Wholesome", "wholesome_doggo",
     {"good boy brings flowers", "grandma knitted warm socks", "friends cheered for my recovery",
      "stranger paid for my coffee", "puppy hugs make mornings", "neighbors shared fresh cookies",
      "kind teacher stayed late", "kids planted a garden"},
     {"love and kindness everywhere", "heart full of joy", "thank you friend", "warm hugs for everyone",
      "happy tears smiling", "gentle hearts unite", "sweet wholesome vibes", "spread kindness today"}},
};

std::vector<std::string> words_of(const std::string& text) { return embeddings::tokenize(text); }

Image class_image(std::size_t index, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x696d67ULL, index});
  Image img;
  img.width = 240;
  img.height = 200;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  const double base[3] = {rng.uniform() * 255, rng.uniform() * 255, rng.uniform() * 255};
  const double accent[3] = {255 - base[0], 255 - base[1], 255 - base[2]};
  const double cx = img.width * (0.3 + 0.4 * rng.uniform());
  const double cy = img.height * (0.3 + 0.4 * rng.uniform());
  const double radius = img.height * (0.15 + 0.2 * rng.uniform());
  const int stripes = 2 + static_cast<int>(index);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double shade = 0.6 + 0.4 * (static_cast<double>(y) / img.height);
      const bool stripe = ((x * stripes / img.width) % 2) == 0;
      const bool disk = std::hypot(x - cx, y - cy) < radius;
      for (int c = 0; c < 3; ++c) {
        double v = disk ? accent[c] : base[c] * shade * (stripe ? 1.0 : 0.75);
        img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic sample dataset"};
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t per_class = 48;
  std::size_t dimension = 16;
  app.add_option("--out", out_dir, "Output directory")->required();
  app.add_option("--seed", seed, "Generation seed")->required();
  app.add_option("--per-class", per_class, "Records per class")->capture_default_str();
  app.add_option("--dim", dimension, "Embedding dimension")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (dimension < kThemes.size()) {
    std::cerr << "--dim must be at least " << kThemes.size() << '\n';
    return 2;
  }

  try {
    fs::create_directories(fs::path(out_dir) / "images");
    Rng rng = Rng::derive(seed, {0x636f72ULL});

    std::vector<corpus::MemeRecord> records;
    std::size_t next_id = 1;
    auto add = [&](const std::string& cls, std::string top, std::string bottom) {
      corpus::MemeRecord r;
      r.id = std::to_string(next_id++);
      r.class_name = cls;
      r.caption_top = std::move(top);
      r.caption_bottom = std::move(bottom);
      r.image_ref = "images/" + cls + ".png";
      records.push_back(std::move(r));
    };
    for (const auto& t : kThemes) {
      for (std::size_t i = 0; i < per_class; ++i) {
        add(t.class_name, t.tops[rng.below(t.tops.size())], t.bottoms[rng.below(t.bottoms.size())]);
      }
    }
    // The residual class mixes the vocabularies of two different themes.
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t a = rng.below(kThemes.size());
      std::size_t b = rng.below(kThemes.size() - 1);
      if (b >= a) ++b;
      add("imminent_ned", kThemes[a].tops[rng.below(kThemes[a].tops.size())],
          kThemes[b].bottoms[rng.below(kThemes[b].bottoms.size())]);
    }
    {
      std::ofstream out(fs::path(out_dir) / "corpus.jsonl");
      corpus::write_corpus(out, records);
    }

    // Embeddings: content words point along their theme's axis plus noise.
    std::map<std::string, std::size_t> word_theme;
    for (std::size_t t = 0; t < kThemes.size(); ++t) {
      for (const auto* list : {&kThemes[t].tops, &kThemes[t].bottoms}) {
        for (const auto& phrase : *list) {
          for (const auto& w : words_of(phrase)) {
            if (!kStopwords.contains(w)) word_theme.emplace(w, t);
          }
        }
      }
    }
    embeddings::EmbeddingTable table(dimension);
    std::vector<float> v(dimension);
    auto fill = [&](const std::string& word, std::optional<std::size_t> theme) {
      Rng wr = Rng::derive(seed, {0x656d62ULL, fnv1a64(word)});
      for (auto& x : v) x = static_cast<float>((theme ? 0.25 : 0.05) * wr.normal());
      if (theme) v[*theme] += 1.0f;
      table.insert(word, v);
    };
    for (const auto& [word, theme] : word_theme) fill(word, theme);
    for (const auto& word : kStopwords) {
      if (!word_theme.contains(word)) fill(word, std::nullopt);
    }
    {
      std::ofstream out(fs::path(out_dir) / "embeddings.txt");
      embeddings::write_embeddings(out, table);
    }

    {
      std::ofstream out(fs::path(out_dir) / "theme_names.conf");
      out << "# Each cluster takes the theme of the class whose memes it holds.\n";
      for (const auto& t : kThemes) out << t.theme << " = " << t.class_name << '\n';
    }

    std::vector<std::string> classes;
    for (const auto& t : kThemes) classes.push_back(t.class_name);
    classes.push_back("imminent_ned");
    for (std::size_t i = 0; i < classes.size(); ++i) {
      write_png(class_image(i, seed), (fs::path(out_dir) / "images" / (classes[i] + ".png")).string());
    }
  } catch (const std::exception& e) {
    std::cerr << "memeify-sample-data: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
