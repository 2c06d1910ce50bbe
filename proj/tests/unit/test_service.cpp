#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#ifdef MEMEIFY_HAVE_BOOST_MATH
#include <boost/math/distributions/chi_squared.hpp>
#endif

#include "../support/sample.hpp"
#include "memeify/service.hpp"

using namespace memeify;
using namespace memeify::service;

namespace {

int api_status(const std::function<void()>& f, std::string* code = nullptr) {
  try {
    f();
  } catch (const ApiError& e) {
    if (code) *code = e.code();
    return e.status();
  }
  return 200;
}

// Model over two tiny classes: "twice" knows exactly two captions.
Artifacts tiny_artifacts() {
  std::vector<corpus::MemeRecord> records = {{"1", "twice", "first one", "here", std::nullopt},
                                             {"2", "twice", "second two", "there", std::nullopt},
                                             {"3", "once", "only caption", "", std::nullopt}};
  Artifacts a;
  a.language_model = std::make_shared<const captiongen::ClassConditionedLM>(captiongen::train_lm(records, 3, 0.0));
  auto model = std::make_shared<themes::ThemeModel>();
  model->k = 1;
  model->centroids = {{0.0}};
  model->theme_names = {"Savage"};
  model->class_to_theme = {{"twice", "Savage"}, {"once", "Savage"}};
  model->assignment_fractions = {{"twice", {0, 1.0, 2, 2}}, {"once", {0, 1.0, 1, 1}}};
  a.themes = model;
  return a;
}

}  // namespace

TEST_CASE("themes lists the six sample themes in lexicographic order") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  const auto themes = svc.themes();
  REQUIRE(themes.size() == 6);
  std::vector<std::string> names;
  for (const auto& t : themes) {
    names.push_back(t["theme"]);
    CHECK(t["classes"].size() == 1);
  }
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(names.front() == "Depressing");
}

TEST_CASE("themes with a 128-class assignment") {
  const std::map<std::string, std::size_t> table = {{"Normie", 44},     {"Savage", 22},     {"Depressing", 18},
                                                    {"Unexpected", 20}, {"Frustrated", 14}, {"Wholesome", 10}};
  auto model = std::make_shared<themes::ThemeModel>();
  for (const auto& [theme, n] : table) {
    for (std::size_t i = 0; i < n; ++i) model->class_to_theme[theme + "_" + std::to_string(i)] = theme;
  }
  Artifacts a;
  a.themes = model;
  MemeService svc(sample::quiet_config(), a);
  const auto themes = svc.themes();
  REQUIRE(themes.size() == 6);
  for (const auto& t : themes) CHECK(t["classes"].size() == table.at(t["theme"]));
}

TEST_CASE("single-theme model gives a one-element list; no model gives 503") {
  MemeService tiny(sample::quiet_config(), tiny_artifacts());
  CHECK(tiny.themes().size() == 1);
  MemeService empty(sample::quiet_config(), Artifacts{});
  std::string code;
  CHECK(api_status([&] { empty.themes(); }, &code) == 503);
  CHECK(code == "model_unavailable");
  auto session = empty.sessions().acquire(std::nullopt).first;
  CHECK(api_status([&] { empty.generate(*session, {}); }) == 503);
}

TEST_CASE("generate for a named class resolves its theme") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  const auto r = svc.generate(*session, {std::nullopt, std::string("imminent_ned")});
  CHECK(r.class_name == "imminent_ned");
  CHECK(r.theme == "Normie");
  CHECK_FALSE(r.caption.top.empty());
  CHECK(r.caption.class_name == "imminent_ned");
  REQUIRE(r.png);
  const auto img = decode_image(*r.png);
  CHECK(img.width == sample::artifacts().class_images->at("imminent_ned").width);
}

TEST_CASE("generate errors") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  std::string code;
  CHECK(api_status([&] { svc.generate(*session, {std::nullopt, std::string("no_such_class")}); }, &code) == 404);
  CHECK(code == "unknown_class");
  CHECK(api_status([&] { svc.generate(*session, {std::string("Hilarious"), std::nullopt}); }, &code) == 404);
  CHECK(code == "unknown_theme");
  CHECK(api_status([&] { svc.generate(*session, {std::string("Savage"), std::string("sad_keanu")}); }, &code) == 404);
  CHECK(code == "class_not_in_theme");
  const auto ok = svc.generate(*session, {std::string("Depressing"), std::string("sad_keanu")});
  CHECK(ok.theme == "Depressing");
}

TEST_CASE("theme-only requests pick a class from that theme") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  for (int i = 0; i < 10; ++i) {
    const auto r = svc.generate(*session, {std::string("Wholesome"), std::nullopt});
    CHECK(r.class_name == "wholesome_doggo");
    CHECK(r.theme == "Wholesome");
  }
}

TEST_CASE("a session never sees a caption twice and exhaustion is 409") {
  auto config = sample::quiet_config();
  config.fresh_attempts = 16;
  MemeService svc(config, tiny_artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  std::set<std::string> digests;
  for (int i = 0; i < 2; ++i) {
    const auto r = svc.generate(*session, {std::nullopt, std::string("twice")});
    CHECK(digests.insert(r.caption.digest()).second);
  }
  std::string code;
  CHECK(api_status([&] { svc.generate(*session, {std::nullopt, std::string("twice")}); }, &code) == 409);
  CHECK(code == "exhausted");
  // Other classes are unaffected.
  CHECK(svc.generate(*session, {std::nullopt, std::string("once")}).caption.top == "only caption");
}

TEST_CASE("distinct sessions may share captions; eviction resets history") {
  using namespace std::chrono_literals;
  auto now = std::make_shared<Clock::time_point>(Clock::time_point{} + 1h);
  auto config = sample::quiet_config();
  config.session_idle = 30min;
  MemeService svc(config, tiny_artifacts(), [now] { return *now; });
  auto a = svc.sessions().acquire(std::nullopt).first;
  auto b = svc.sessions().acquire(std::nullopt).first;
  const auto ra = svc.generate(*a, {std::nullopt, std::string("once")});
  const auto rb = svc.generate(*b, {std::nullopt, std::string("once")});
  CHECK(ra.caption.digest() == rb.caption.digest());
  CHECK(api_status([&] { svc.generate(*a, {std::nullopt, std::string("once")}); }) == 409);
  *now += 31min;
  CHECK(svc.sessions().evict_idle() == 2);
  auto [fresh, created] = svc.sessions().acquire(a->id);
  CHECK(created);
  CHECK(svc.generate(*fresh, {std::nullopt, std::string("once")}).caption.digest() == ra.caption.digest());
}

TEST_CASE("sample model: 200 requests per class stay distinct until 409") {
  MemeService svc(sample::quiet_config(3), sample::artifacts());
  for (const auto& cls : sample::artifacts().language_model->classes()) {
    auto session = svc.sessions().acquire(std::nullopt).first;
    std::set<std::string> digests;
    int served = 0;
    for (int i = 0; i < 200; ++i) {
      try {
        const auto r = svc.generate(*session, {std::nullopt, cls});
        CHECK(r.caption.class_name == cls);
        CHECK(digests.insert(r.caption.digest()).second);
        ++served;
      } catch (const ApiError& e) {
        CHECK(e.status() == 409);
        break;
      }
    }
    CHECK(served > 20);
  }
}

TEST_CASE("warm cache requests do not call the language model") {
  auto config = sample::quiet_config();
  MemeService svc(config, sample::artifacts());
  svc.warm_up();
  const auto before = svc.counters();
  CHECK(before.request_generations == 0);
  CHECK(before.background_generations > 0);
  for (const auto& cls : sample::artifacts().language_model->classes()) {
    auto session = svc.sessions().acquire(std::nullopt).first;
    for (int i = 0; i < 10; ++i) {
      const auto r = svc.generate(*session, {std::nullopt, cls});
      CHECK(r.cached);
    }
  }
  CHECK(svc.counters().request_generations == 0);
}

TEST_CASE("background refill fills buffers after a miss") {
  auto config = sample::quiet_config();
  config.background_refill = true;
  config.refill_interval = std::chrono::milliseconds(20);
  MemeService svc(config, sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  const auto first = svc.generate(*session, {std::nullopt, std::string("sad_keanu")});
  CHECK_FALSE(first.cached);
  bool full = false;
  for (int i = 0; i < 200 && !full; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    full = svc.cache().live_count("sad_keanu") >= svc.cache().capacity() - 1;
  }
  CHECK(full);
  CHECK(svc.generate(*session, {std::nullopt, std::string("sad_keanu")}).cached);
}

TEST_CASE("no-argument requests are uniform over classes") {
  MemeService svc(sample::quiet_config(17), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  std::map<std::string, int> counts;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    // Each pick uses a fresh session so exhaustion cannot bias the draw.
    auto s = svc.sessions().acquire(std::nullopt).first;
    ++counts[svc.generate(*s, {}).class_name];
  }
  REQUIRE(counts.size() <= 6);
  const double expected = n / 6.0;
  double chi2 = 0;
  for (const auto& cls : sample::artifacts().language_model->classes()) {
    const double d = counts[cls] - expected;
    chi2 += d * d / expected;
  }
#ifdef MEMEIFY_HAVE_BOOST_MATH
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(5), chi2));
  CHECK(p > 0.01);
#else
  CHECK(chi2 < 15.0863);  // 0.99 quantile of chi-squared with 5 degrees of freedom
#endif
}

TEST_CASE("custom upload of a stored class image matches its class") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  for (const auto& [cls, img] : *sample::artifacts().class_images) {
    const auto bytes = read_file_bytes(sample::path("images/" + cls + ".png"));
    const auto r = svc.custom(*session, bytes);
    CHECK(r.meme.class_name == cls);
    CHECK(r.similarity == doctest::Approx(1.0));
    CHECK_FALSE(r.fallback);
    REQUIRE(r.meme.png);
    const auto out = decode_image(*r.meme.png);
    CHECK(out.width == img.width);
    CHECK(out.height == img.height);
  }
}

TEST_CASE("a perturbed class image matches the brute-force nearest class") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  const auto& images = *sample::artifacts().class_images;
  Rng rng(21);
  for (const auto& [cls, img] : images) {
    Image noisy = img;
    for (auto& p : noisy.pixels) p = static_cast<std::uint8_t>(std::clamp<int>(p + static_cast<int>(rng.below(31)) - 15, 0, 255));
    const auto query = imageindex::extract_features(noisy);
    std::string best;
    double best_sim = -2.0;
    for (const auto& [other, other_img] : images) {
      const double sim = imageindex::cosine_similarity(query, imageindex::extract_features(other_img));
      if (sim > best_sim) {
        best_sim = sim;
        best = other;
      }
    }
    const auto r = svc.custom(*session, encode_png(noisy));
    CHECK(r.meme.class_name == best);
    CHECK(r.meme.class_name == cls);
  }
}

TEST_CASE("custom upload errors") {
  auto config = sample::quiet_config();
  MemeService svc(config, sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  std::string code;
  std::vector<std::uint8_t> big(6 * 1024 * 1024, 0x89);
  CHECK(api_status([&] { svc.custom(*session, big); }, &code) == 400);
  CHECK(code == "upload_too_large");
  const std::vector<std::uint8_t> junk = {'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'a', 'g', 'e'};
  CHECK(api_status([&] { svc.custom(*session, junk); }, &code) == 400);
  CHECK(code == "undecodable_image");
  auto no_index = sample::artifacts();
  no_index.index.reset();
  MemeService blind(config, no_index);
  CHECK(api_status([&] { blind.custom(*session, junk); }, &code) == 503);
  CHECK(code == "index_unavailable");
}

TEST_CASE("small uploads are upscaled before rendering") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  Image small(20, 30, 3, 100);
  const auto r = svc.custom(*session, encode_png(small));
  REQUIRE(r.meme.png);
  const auto out = decode_image(*r.meme.png);
  CHECK(out.width >= 64);
  CHECK(out.height >= 64);
}

TEST_CASE("concurrent requests on one session never repeat") {
  auto config = sample::quiet_config(5);
  config.background_refill = true;
  config.refill_interval = std::chrono::milliseconds(5);
  MemeService svc(config, sample::artifacts());
  auto session = svc.sessions().acquire(std::nullopt).first;
  std::mutex m;
  std::vector<std::string> digests;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 15; ++i) {
        try {
          const auto r = svc.generate(*session, {std::nullopt, std::string("futuruma_fry")});
          std::lock_guard lock(m);
          digests.push_back(r.caption.digest());
        } catch (const ApiError&) {
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  std::set<std::string> unique(digests.begin(), digests.end());
  CHECK(unique.size() == digests.size());
  CHECK(digests.size() > 30);
}

TEST_CASE("swapping artifacts takes effect for new requests") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  CHECK(svc.themes().size() == 6);
  svc.swap_artifacts(tiny_artifacts());
  CHECK(svc.themes().size() == 1);
  auto session = svc.sessions().acquire(std::nullopt).first;
  CHECK(svc.generate(*session, {}).theme == "Savage");
}

TEST_CASE("health reports artifacts and counters") {
  MemeService svc(sample::quiet_config(), sample::artifacts());
  const auto h = svc.health();
  CHECK(h["status"] == "ok");
  CHECK(h["artifacts"]["themes"] == true);
  CHECK(h["artifacts"]["class_images"] == 6);
}

TEST_CASE("service config parsing") {
  std::istringstream in(
      "# sample\n"
      "listen_address = 0.0.0.0\n"
      "port = 9000\n"
      "theme_model = themes.json\n"
      "cache_capacity = 8\n"
      "cache_ttl_seconds = 60\n"
      "session_idle_seconds = 120\n"
      "upload_limit_bytes = 1000\n"
      "seed = 42\n"
      "background_refill = false\n"
      "temperature = 0.8\n");
  const auto c = parse_service_config(in);
  CHECK(c.listen_address == "0.0.0.0");
  CHECK(c.port == 9000);
  CHECK(c.cache_capacity == 8);
  CHECK(c.cache_ttl == std::chrono::seconds(60));
  CHECK(c.session_idle == std::chrono::seconds(120));
  CHECK(c.upload_limit == 1000);
  CHECK(c.seed == 42);
  CHECK_FALSE(c.background_refill);
  CHECK(c.temperature == doctest::Approx(0.8));

  std::istringstream unknown("colour = blue\n");
  CHECK_THROWS_AS(parse_service_config(unknown), ParseError);
  std::istringstream bad_number("port = eighty\n");
  CHECK_THROWS_AS(parse_service_config(bad_number), ParseError);
  std::istringstream bad_port("port = 70000\n");
  CHECK_THROWS_AS(parse_service_config(bad_port), Error);
  CHECK_THROWS_AS(load_service_config("/nonexistent/serve.conf"), MissingInputError);
}

TEST_CASE("relative artifact paths resolve against the config file") {
  const auto dir = std::filesystem::temp_directory_path() / "memeify_config_test";
  std::filesystem::create_directories(dir);
  const auto file = dir / "serve.conf";
  std::ofstream(file) << "language_model = models/lm.json\nstatic_dir = /abs/www\n";
  const auto c = load_service_config(file.string());
  CHECK(c.language_model == (dir / "models/lm.json").string());
  CHECK(c.static_dir == "/abs/www");
  std::filesystem::remove_all(dir);
}
