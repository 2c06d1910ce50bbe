#include "memeify/service.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>

#include "memeify/corpus.hpp"
#include "memeify/renderer.hpp"

namespace memeify::service {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

template <typename T>
T parse_number(const std::string& value, std::size_t line) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError(line, "'" + value + "' is not a valid number");
  }
  return out;
}

bool parse_bool(const std::string& value, std::size_t line) {
  if (value == "true" || value == "on" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "off" || value == "no" || value == "0") return false;
  throw ParseError(line, "'" + value + "' is not a boolean");
}

}  // namespace

ServiceConfig parse_service_config(std::istream& in) {
  ServiceConfig config;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ParseError(line_number, "expected 'key = value'");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    using std::chrono::milliseconds;
    using std::chrono::seconds;
    if (key == "listen_address") {
      config.listen_address = value;
    } else if (key == "port") {
      config.port = parse_number<int>(value, line_number);
    } else if (key == "theme_model") {
      config.theme_model = value;
    } else if (key == "language_model") {
      config.language_model = value;
    } else if (key == "lsh_index") {
      config.lsh_index = value;
    } else if (key == "class_images") {
      config.class_images = value;
    } else if (key == "static_dir") {
      config.static_dir = value;
    } else if (key == "cache_capacity") {
      config.cache_capacity = parse_number<std::size_t>(value, line_number);
    } else if (key == "cache_ttl_seconds") {
      config.cache_ttl = seconds(parse_number<long>(value, line_number));
    } else if (key == "session_idle_seconds") {
      config.session_idle = seconds(parse_number<long>(value, line_number));
    } else if (key == "upload_limit_bytes") {
      config.upload_limit = parse_number<std::size_t>(value, line_number);
    } else if (key == "seed") {
      config.seed = parse_number<std::uint64_t>(value, line_number);
    } else if (key == "background_refill") {
      config.background_refill = parse_bool(value, line_number);
    } else if (key == "refill_interval_ms") {
      config.refill_interval = milliseconds(parse_number<long>(value, line_number));
    } else if (key == "fresh_attempts") {
      config.fresh_attempts = parse_number<std::size_t>(value, line_number);
    } else if (key == "temperature") {
      config.temperature = parse_number<double>(value, line_number);
    } else if (key == "warm_on_start") {
      config.warm_on_start = parse_bool(value, line_number);
    } else {
      throw ParseError(line_number, "unknown key '" + key + "'");
    }
  }
  if (config.port < 0 || config.port > 65535) throw Error("port out of range");
  if (config.cache_capacity == 0) throw Error("cache_capacity must be positive");
  if (!(config.temperature > 0.0)) throw Error("temperature must be positive");
  return config;
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError(path);
  ServiceConfig config = parse_service_config(in);
  // Relative artifact paths are relative to the config file.
  const fs::path base = fs::path(path).parent_path();
  for (auto* p : {&config.theme_model, &config.language_model, &config.lsh_index, &config.class_images,
                  &config.static_dir}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return config;
}

std::map<std::string, Image> load_class_images(const std::string& directory) {
  if (!fs::is_directory(directory)) throw MissingInputError(directory);
  std::map<std::string, Image> images;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::string ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
    const std::string name = corpus::normalize_class_name(file.stem().string());
    if (images.contains(name)) throw Error("duplicate image for class '" + name + "'");
    try {
      images.emplace(name, read_image(file.string()));
    } catch (const std::exception& e) {
      throw Error("class '" + name + "': " + e.what());
    }
  }
  return images;
}

Artifacts load_artifacts(const ServiceConfig& config) {
  Artifacts artifacts;
  if (!config.theme_model.empty()) {
    artifacts.themes = std::make_shared<const themes::ThemeModel>(themes::load_theme_model(config.theme_model));
  }
  if (!config.language_model.empty()) {
    artifacts.language_model = std::make_shared<const captiongen::ClassConditionedLM>(
        captiongen::ClassConditionedLM::load(config.language_model));
  }
  if (!config.lsh_index.empty()) {
    artifacts.index = std::make_shared<const imageindex::LshIndex>(imageindex::LshIndex::load(config.lsh_index));
  }
  if (!config.class_images.empty()) {
    artifacts.class_images = std::make_shared<const std::map<std::string, Image>>(load_class_images(config.class_images));
  }
  return artifacts;
}

// ---------------------------------------------------------------------------
// MemeService

MemeService::MemeService(ServiceConfig config, Artifacts artifacts, ClockFn clock, std::unique_ptr<CaptionCache> cache)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      cache_(cache ? std::move(cache) : std::make_unique<MemeCache>(config_.cache_capacity, config_.cache_ttl, clock_)),
      sessions_(config_.session_idle, clock_),
      artifacts_(std::move(artifacts)),
      picker_(Rng::derive(config_.seed, {0x7069636bULL})) {
  if (config_.warm_on_start) warm_up();
  if (config_.background_refill) refill_thread_ = std::thread([this] { refill_loop(); });
}

MemeService::~MemeService() {
  {
    std::lock_guard lock(refill_mutex_);
    stopping_ = true;
  }
  refill_cv_.notify_all();
  if (refill_thread_.joinable()) refill_thread_.join();
}

Artifacts MemeService::artifacts() const {
  std::lock_guard lock(artifacts_mutex_);
  return artifacts_;
}

void MemeService::swap_artifacts(Artifacts artifacts) {
  std::lock_guard lock(artifacts_mutex_);
  artifacts_ = std::move(artifacts);
}

json MemeService::themes() const {
  const auto model = artifacts().themes;
  if (!model) throw ApiError(503, "model_unavailable", "theme model is not loaded");
  json out = json::array();
  for (const auto& [theme, classes] : model->classes_by_theme()) out.push_back({{"theme", theme}, {"classes", classes}});
  return out;
}

json MemeService::health() const {
  const auto a = artifacts();
  const auto c = counters();
  return {{"status", "ok"},
          {"artifacts",
           {{"themes", a.themes != nullptr},
            {"language_model", a.language_model != nullptr},
            {"index", a.index != nullptr},
            {"class_images", a.class_images ? a.class_images->size() : 0}}},
          {"model_id", a.language_model ? json(a.language_model->id()) : json(nullptr)},
          {"cache",
           {{"hits", c.cache.hits}, {"misses", c.cache.misses}, {"expired", c.cache.expired},
            {"inserted", c.cache.inserted}}},
          {"generations", {{"request", c.request_generations}, {"background", c.background_generations}}},
          {"sessions", c.sessions}};
}

ServiceCounters MemeService::counters() const {
  return {request_generations_.load(), background_generations_.load(), cache_->stats(), sessions_.size()};
}

std::string MemeService::resolve_class(const themes::ThemeModel& model, const captiongen::ClassConditionedLM& lm,
                                       const GenerateRequest& request, std::string& theme) {
  if (request.class_name) {
    const std::string name = corpus::normalize_class_name(*request.class_name);
    auto it = model.class_to_theme.find(name);
    if (it == model.class_to_theme.end() || !lm.knows(name)) {
      throw ApiError(404, "unknown_class", "unknown class '" + *request.class_name + "'");
    }
    if (request.theme && *request.theme != it->second) {
      throw ApiError(404, "class_not_in_theme",
                     "class '" + name + "' belongs to theme '" + it->second + "', not '" + *request.theme + "'");
    }
    theme = it->second;
    return name;
  }

  std::map<std::string, std::vector<std::string>> usable;
  for (const auto& [cls, th] : model.class_to_theme) {
    if (lm.knows(cls)) usable[th].push_back(cls);
  }
  std::lock_guard lock(rng_mutex_);
  if (request.theme) {
    auto it = usable.find(*request.theme);
    if (it == usable.end()) throw ApiError(404, "unknown_theme", "unknown theme '" + *request.theme + "'");
    theme = it->first;
    return it->second[picker_.below(it->second.size())];
  }
  if (usable.empty()) throw ApiError(503, "model_unavailable", "no class is available for generation");
  auto it = std::next(usable.begin(), static_cast<std::ptrdiff_t>(picker_.below(usable.size())));
  theme = it->first;
  return it->second[picker_.below(it->second.size())];
}

captiongen::GeneratedCaption MemeService::fresh(const captiongen::ClassConditionedLM& lm, const std::string& class_name) {
  const std::uint64_t seed = Rng::derive(config_.seed, {seed_counter_.fetch_add(1)}).next_u64();
  captiongen::GenerateOptions options;
  options.temperature = config_.temperature;
  return captiongen::generate(lm, class_name, seed, options);
}

MemeResult MemeService::serve_class(SessionState& session, const Artifacts& artifacts, const std::string& class_name,
                                    const std::string& theme, const Image* base) {
  MemeResult result;
  result.class_name = class_name;
  result.theme = theme;
  {
    std::lock_guard lock(session.mutex);
    auto& seen = session.seen[class_name];
    if (auto hit = cache_->find_unseen(class_name, seen)) {
      result.caption = std::move(*hit);
      result.cached = true;
    } else {
      request_refill(class_name);
      bool found = false;
      for (std::size_t attempt = 0; attempt < config_.fresh_attempts && !found; ++attempt) {
        auto caption = fresh(*artifacts.language_model, class_name);
        request_generations_.fetch_add(1);
        if (seen.contains(caption.digest())) continue;
        cache_->put(caption);
        result.caption = std::move(caption);
        found = true;
      }
      if (!found) {
        throw ApiError(409, "exhausted", "no unseen caption is available for class '" + class_name + "'");
      }
    }
    seen.insert(result.caption.digest());
  }
  if (base) {
    try {
      result.png = render::render_meme(*base, result.caption);
    } catch (const render::CaptionTooLong&) {
      result.png.reset();
    }
  }
  return result;
}

MemeResult MemeService::generate(SessionState& session, const GenerateRequest& request) {
  const Artifacts a = artifacts();
  if (!a.themes || !a.language_model) throw ApiError(503, "model_unavailable", "models are not loaded");
  std::string theme;
  const std::string class_name = resolve_class(*a.themes, *a.language_model, request, theme);
  const Image* base = nullptr;
  if (a.class_images) {
    auto it = a.class_images->find(class_name);
    if (it != a.class_images->end()) base = &it->second;
  }
  return serve_class(session, a, class_name, theme, base);
}

CustomResult MemeService::custom(SessionState& session, std::span<const std::uint8_t> upload) {
  if (upload.size() > config_.upload_limit) {
    throw ApiError(400, "upload_too_large",
                   "upload of " + std::to_string(upload.size()) + " bytes exceeds the " +
                       std::to_string(config_.upload_limit) + " byte limit");
  }
  const Artifacts a = artifacts();
  if (!a.index) throw ApiError(503, "index_unavailable", "image index is not loaded");
  if (!a.themes || !a.language_model) throw ApiError(503, "model_unavailable", "models are not loaded");

  Image image;
  try {
    image = to_rgb(decode_image(upload));
  } catch (const ImageDecodeError& e) {
    throw ApiError(400, "undecodable_image", e.what());
  }
  const auto match = a.index->lookup(imageindex::extract_features(image), true);
  if (!a.language_model->knows(match.class_name)) {
    throw ApiError(404, "unknown_class", "matched class '" + match.class_name + "' has no caption model");
  }
  auto theme_it = a.themes->class_to_theme.find(match.class_name);
  const std::string theme = theme_it != a.themes->class_to_theme.end() ? theme_it->second
                                                                       : std::string(themes::kResidualTheme);
  const int smallest = std::min(image.width, image.height);
  if (smallest < render::kMinRenderSize) {
    image = upscale_nearest(image, (render::kMinRenderSize + smallest - 1) / smallest);
  }
  CustomResult out;
  out.meme = serve_class(session, a, match.class_name, theme, &image);
  out.similarity = match.similarity;
  out.fallback = match.fallback;
  return out;
}

// ---------------------------------------------------------------------------
// Cache refill

void MemeService::refill_class(const captiongen::ClassConditionedLM& lm, const std::string& class_name) {
  const std::size_t live = cache_->live_count(class_name);
  if (live >= cache_->capacity()) return;
  std::size_t missing = cache_->capacity() - live;
  // Duplicate samples are skipped; the attempt budget bounds small models.
  for (std::size_t attempt = 0; attempt < 4 * cache_->capacity() && missing > 0; ++attempt) {
    auto caption = fresh(lm, class_name);
    background_generations_.fetch_add(1);
    if (cache_->put(caption)) --missing;
  }
}

void MemeService::warm_up() {
  const auto lm = artifacts().language_model;
  if (!lm) return;
  for (const auto& cls : lm->classes()) refill_class(*lm, cls);
}

void MemeService::request_refill(const std::string& class_name) {
  if (!config_.background_refill) return;
  {
    std::lock_guard lock(refill_mutex_);
    refill_queue_.insert(class_name);
  }
  refill_cv_.notify_one();
}

void MemeService::refill_loop() {
  for (;;) {
    std::set<std::string> classes;
    {
      std::unique_lock lock(refill_mutex_);
      refill_cv_.wait_for(lock, config_.refill_interval, [this] { return stopping_ || !refill_queue_.empty(); });
      if (stopping_) return;
      classes.swap(refill_queue_);
    }
    const auto lm = artifacts().language_model;
    if (!lm) continue;
    if (classes.empty()) classes.insert(lm->classes().begin(), lm->classes().end());
    for (const auto& cls : classes) {
      {
        std::lock_guard lock(refill_mutex_);
        if (stopping_) return;
      }
      if (lm->knows(cls)) refill_class(*lm, cls);
    }
  }
}

}  // namespace memeify::service
