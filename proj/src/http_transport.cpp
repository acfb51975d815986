#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "toc/gateway.hpp"

namespace toc::gateway {

namespace {

class HttplibTransport : public Transport {
 public:
  HttpResponse post(const std::string& url,
                    const std::vector<std::pair<std::string, std::string>>& headers,
                    const std::string& body, std::chrono::seconds timeout) override {
    // split "scheme://host[:port]" from the request path
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, false, "malformed url '" + url + "'"};
    const auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers hs;
    for (const auto& [k, v] : headers)
      if (k != "Content-Type") hs.emplace(k, v);

    auto res = client.Post(path, hs, body, "application/json");
    if (!res) {
      const auto err = res.error();
      return {0, {}, err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::ConnectionTimeout,
              httplib::to_string(err)};
    }
    return {res->status, res->body, false, {}};
  }
};

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

}  // namespace toc::gateway
