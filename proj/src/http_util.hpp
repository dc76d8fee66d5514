#pragma once

#include <string>

#include "groundrag/errors.hpp"

namespace groundrag::detail {

// "https://host:port/a/b" -> {"https://host:port", "/a/b"}
struct SplitUrl {
    std::string base;
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::config, "endpoint URL '" + url + "' has no scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string excerpt(const std::string& body, std::size_t limit = 200) {
    if (body.size() <= limit) return body;
    return body.substr(0, limit) + "...";
}

}  // namespace groundrag::detail
