#pragma once

// Transport over HTTP(S) using cpp-httplib. Include only where network
// access is wanted; define CPPHTTPLIB_OPENSSL_SUPPORT for https endpoints.

#include <string>

#include <httplib.h>

#include "bubblelab/gateway.hpp"

namespace bubblelab {

class HttpTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    const auto scheme_end = request.url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("endpoint must be an absolute URL: " + request.url, false);
    const auto path_start = request.url.find('/', scheme_end + 3);
    const std::string origin = request.url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

    httplib::Client client(origin);
    if (!client.is_valid()) throw TransportError("unsupported endpoint " + origin, false);
    const auto seconds = static_cast<time_t>(request.timeout_seconds);
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    client.set_write_timeout(seconds);

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        headers.emplace(k, v);
      }
    }
    auto result = client.Post(path, headers, request.body, content_type);
    if (!result) throw TransportError("request to " + origin + " failed: " + httplib::to_string(result.error()), true);
    return {result->status, result->body};
  }
};

}  // namespace bubblelab
