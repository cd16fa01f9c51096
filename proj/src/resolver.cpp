#include <chrono>
#include <fstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "refscore/csv.hpp"
#include "refscore/ingest.hpp"

namespace refscore::ingest {
namespace {

std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

std::string clean_field(std::string s) {
  for (auto& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(sep, start);
    const auto piece = s.substr(start, end == std::string_view::npos ? s.size() - start : end - start);
    if (!piece.empty()) out.emplace_back(piece);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

HttpResolver::HttpResolver(std::string base_url, double timeout_seconds, int retries)
    : timeout_(timeout_seconds), retries_(retries) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("resolver URL needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  scheme_host_ = base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (timeout_ <= 0.0) throw ConfigError("resolver timeout must be positive");
  if (retries_ < 1) throw ConfigError("resolver retries must be at least 1");
}

LookupResult HttpResolver::lookup(const std::string& doi) {
  const auto path = path_prefix_ + "/works/" + percent_encode(doi);
  const auto secs = static_cast<time_t>(timeout_);
  const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  LookupResult result;
  result.status = LookupStatus::transport_error;
  for (int attempt = 0; attempt < retries_; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    httplib::Client client(scheme_host_);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_follow_location(true);
    auto res = client.Get(path);
    if (!res) {
      result.error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 404) {
      result.status = LookupStatus::not_found;
      result.error.clear();
      return result;
    }
    if (res->status != 200) {
      result.error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto body = nlohmann::json::parse(res->body);
      const auto& msg = body.at("message");
      DoiMetadata meta;
      if (msg.contains("container-title") && !msg["container-title"].empty()) {
        meta.container_title = msg["container-title"][0].get<std::string>();
      }
      if (msg.contains("ISSN")) {
        for (const auto& s : msg["ISSN"]) meta.issns.push_back(s.get<std::string>());
      }
      result.status = LookupStatus::found;
      result.metadata = std::move(meta);
      result.error.clear();
      return result;
    } catch (const nlohmann::json::exception& e) {
      result.error = std::string("malformed response: ") + e.what();
    }
  }
  return result;
}

CachedResolver::CachedResolver(std::filesystem::path cache_file, std::shared_ptr<MetadataResolver> live)
    : path_(std::move(cache_file)), live_(std::move(live)) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = [&] {
      std::vector<std::string> f;
      std::size_t start = 0;
      for (;;) {
        const auto tab = line.find('\t', start);
        f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      return f;
    }();
    if (fields.size() != 4 || (fields[1] != "found" && fields[1] != "notfound")) {
      throw DataError(fmt::format("{}:{}: malformed cache record", path_.string(), lineno));
    }
    LookupResult r;
    r.status = fields[1] == "found" ? LookupStatus::found : LookupStatus::not_found;
    r.metadata.container_title = fields[2];
    r.metadata.issns = split(fields[3], ';');
    entries_[fields[0]] = std::move(r);  // later records win
  }
}

LookupResult CachedResolver::lookup(const std::string& doi) {
  {
    const std::lock_guard lock(mutex_);
    if (const auto it = entries_.find(doi); it != entries_.end()) return it->second;
    if (!live_) {
      LookupResult miss;
      miss.status = LookupStatus::not_found;
      return miss;
    }
    ++live_calls_;
  }
  auto r = live_->lookup(doi);
  if (r.status != LookupStatus::transport_error) {
    const std::lock_guard lock(mutex_);
    if (entries_.emplace(doi, r).second) append(doi, r);
  }
  return r;
}

std::size_t CachedResolver::live_calls() const {
  const std::lock_guard lock(mutex_);
  return live_calls_;
}

void CachedResolver::append(const std::string& doi, const LookupResult& r) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw DataError("cannot append to resolver cache " + path_.string());
  std::string issns;
  for (const auto& s : r.metadata.issns) {
    if (!issns.empty()) issns += ';';
    issns += clean_field(s);
  }
  out << clean_field(doi) << '\t' << (r.status == LookupStatus::found ? "found" : "notfound") << '\t'
      << clean_field(r.metadata.container_title) << '\t' << issns << '\n';
  if (!out) throw DataError("cannot append to resolver cache " + path_.string());
}

}  // namespace refscore::ingest
