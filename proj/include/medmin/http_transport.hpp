#pragma once

// Live Transport backed by cpp-httplib. HTTPS needs CPPHTTPLIB_OPENSSL_SUPPORT.

#include <string>

#include "httplib.h"

#include "medmin/scraper.hpp"

namespace medmin::scrape {

class HttplibTransport : public Transport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(20))
      : timeout_(timeout) {}

  HttpResponse get(const std::string& url, const std::string& user_agent) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const auto origin = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (text::starts_with(url, "https://"))
      throw TransportError("built without TLS support; cannot fetch " + url);
#endif
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(path, {{"User-Agent", user_agent}});
    if (!res) throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::chrono::seconds timeout_;
};

}  // namespace medmin::scrape
