#include <doctest.h>

#include <httplib.h>

#include <set>

#include "../support/sample.hpp"
#include "memeify/http_server.hpp"

using namespace memeify;
using namespace memeify::service;
using nlohmann::json;

namespace {

struct Running {
  MemeService service;
  HttpServer server;
  httplib::Client client;

  explicit Running(Artifacts artifacts, ServiceConfig config = sample::quiet_config())
      : service(std::move(config), std::move(artifacts)), server(service), client("127.0.0.1", bind_and_start()) {
    client.set_read_timeout(30, 0);
  }

  int bind_and_start() {
    const int port = server.bind("127.0.0.1", 0);
    server.start();
    return port;
  }
};

std::string session_cookie(const httplib::Result& res) {
  const auto header = res->get_header_value("Set-Cookie");
  const auto start = header.find('=');
  const auto end = header.find(';');
  REQUIRE(start != std::string::npos);
  return header.substr(start + 1, end - start - 1);
}

void check_error(const httplib::Result& res, int status, const std::string& code) {
  REQUIRE(res);
  CHECK(res->status == status);
  CHECK(res->get_header_value("Content-Type").find("application/json") == 0);
  const auto body = json::parse(res->body);
  CHECK(body["code"] == code);
  CHECK(body["message"].is_string());
}

}  // namespace

TEST_CASE("png_data_url encodes base64") {
  const std::vector<std::uint8_t> bytes = {'M', 'a', 'n'};
  CHECK(png_data_url(bytes) == "data:image/png;base64,TWFu");
  const std::vector<std::uint8_t> two = {'M', 'a'};
  CHECK(png_data_url(two) == "data:image/png;base64,TWE=");
  const std::vector<std::uint8_t> one = {'M'};
  CHECK(png_data_url(one) == "data:image/png;base64,TQ==");
  CHECK(png_data_url({}) == "data:image/png;base64,");
}

TEST_CASE("health and themes") {
  Running r(sample::artifacts());
  auto health = r.client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");

  auto themes = r.client.Get("/api/themes");
  REQUIRE(themes);
  CHECK(themes->status == 200);
  const auto body = json::parse(themes->body);
  REQUIRE(body.is_array());
  CHECK(body.size() == 6);
  for (const auto& t : body) {
    CHECK(t["theme"].is_string());
    CHECK(t["classes"].is_array());
  }
}

TEST_CASE("generate returns a meme and sets a session cookie once") {
  Running r(sample::artifacts());
  auto first = r.client.Post("/api/generate", R"({"class":"sad_keanu"})", "application/json");
  REQUIRE(first);
  CHECK(first->status == 200);
  const auto cookie = session_cookie(first);
  CHECK(first->get_header_value("Set-Cookie").find("HttpOnly") != std::string::npos);
  const auto body = json::parse(first->body);
  CHECK(body["class"] == "sad_keanu");
  CHECK(body["theme"] == "Depressing");
  CHECK(body["caption"]["top"].is_string());
  CHECK(body["caption"]["bottom"].is_string());
  CHECK(body["digest"].is_string());
  CHECK(body["cached"].is_boolean());
  CHECK(body["image"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);

  httplib::Headers headers = {{"Cookie", std::string(kSessionCookie) + "=" + cookie}};
  std::set<std::string> digests = {body["digest"]};
  for (int i = 0; i < 20; ++i) {
    auto next = r.client.Post("/api/generate", headers, R"({"class":"sad_keanu"})", "application/json");
    REQUIRE(next);
    REQUIRE(next->status == 200);
    CHECK_FALSE(next->has_header("Set-Cookie"));
    CHECK(digests.insert(json::parse(next->body)["digest"]).second);
  }
}

TEST_CASE("generate with an empty body picks any class") {
  Running r(sample::artifacts());
  auto res = r.client.Post("/api/generate", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["theme"].is_string());
}

TEST_CASE("generate errors are JSON") {
  Running r(sample::artifacts());
  check_error(r.client.Post("/api/generate", "{not json", "application/json"), 400, "bad_request");
  check_error(r.client.Post("/api/generate", R"({"class":5})", "application/json"), 400, "bad_request");
  check_error(r.client.Post("/api/generate", R"({"class":"nope"})", "application/json"), 404, "unknown_class");
  check_error(r.client.Post("/api/generate", R"({"theme":"Hilarious"})", "application/json"), 404, "unknown_theme");
  check_error(r.client.Get("/api/nothing"), 404, "not_found");
}

TEST_CASE("missing model answers 503") {
  Running r(Artifacts{});
  check_error(r.client.Get("/api/themes"), 503, "model_unavailable");
  check_error(r.client.Post("/api/generate", "{}", "application/json"), 503, "model_unavailable");
  check_error(r.client.Get("/api/images/sad_keanu"), 503, "images_unavailable");
}

TEST_CASE("custom upload via multipart matches the class") {
  Running r(sample::artifacts());
  const auto bytes = read_file_bytes(sample::path("images/surprised_pikachu.png"));
  httplib::MultipartFormDataItems items = {
      {"image", std::string(bytes.begin(), bytes.end()), "upload.png", "image/png"}};
  auto res = r.client.Post("/api/custom", items);
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto body = json::parse(res->body);
  CHECK(body["matched_class"] == "surprised_pikachu");
  CHECK(body["theme"] == "Unexpected");
  CHECK(body["similarity"].get<double>() == doctest::Approx(1.0));
  CHECK(body["fallback"] == false);
  CHECK(body["image"].is_string());
}

TEST_CASE("custom upload errors") {
  Running r(sample::artifacts());
  httplib::MultipartFormDataItems wrong_field = {{"file", "abc", "a.png", "image/png"}};
  check_error(r.client.Post("/api/custom", wrong_field), 400, "missing_image");
  check_error(r.client.Post("/api/custom", "", "application/octet-stream"), 400, "missing_image");
  check_error(r.client.Post("/api/custom", "garbage bytes", "application/octet-stream"), 400, "undecodable_image");

  const std::string six_mb(6 * 1024 * 1024, 'x');
  httplib::MultipartFormDataItems big = {{"image", six_mb, "big.png", "image/png"}};
  check_error(r.client.Post("/api/custom", big), 400, "upload_too_large");
  const std::string huge(12 * 1024 * 1024, 'x');
  check_error(r.client.Post("/api/custom", huge, "application/octet-stream"), 400, "upload_too_large");
}

TEST_CASE("class images are served as PNG") {
  Running r(sample::artifacts());
  auto res = r.client.Get("/api/images/wholesome_doggo");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  const std::vector<std::uint8_t> bytes(res->body.begin(), res->body.end());
  CHECK(decode_image(bytes) == sample::artifacts().class_images->at("wholesome_doggo"));
  check_error(r.client.Get("/api/images/nobody"), 404, "unknown_class");
}

TEST_CASE("exhaustion over HTTP is 409") {
  std::vector<corpus::MemeRecord> records = {{"1", "solo", "just one", "caption", std::nullopt}};
  Artifacts a;
  a.language_model = std::make_shared<const captiongen::ClassConditionedLM>(captiongen::train_lm(records, 3, 0.0));
  auto model = std::make_shared<themes::ThemeModel>();
  model->class_to_theme = {{"solo", "Savage"}};
  a.themes = model;
  Running r(a);
  auto first = r.client.Post("/api/generate", "{}", "application/json");
  REQUIRE(first);
  CHECK(first->status == 200);
  httplib::Headers headers = {{"Cookie", std::string(kSessionCookie) + "=" + session_cookie(first)}};
  check_error(r.client.Post("/api/generate", headers, "{}", "application/json"), 409, "exhausted");
}
