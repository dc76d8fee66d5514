#include "groundrag/sse.hpp"

namespace groundrag::sse {

bool Parser::feed(std::string_view bytes, const Handler& on_event) {
    pending_.append(bytes);
    std::size_t start = 0;
    while (true) {
        const auto nl = pending_.find('\n', start);
        if (nl == std::string::npos) break;
        std::string_view line(pending_.data() + start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        start = nl + 1;
        if (!dispatch_line(line, on_event)) {
            pending_.erase(0, start);
            return false;
        }
    }
    pending_.erase(0, start);
    return true;
}

bool Parser::dispatch_line(std::string_view line, const Handler& on_event) {
    if (line.empty()) {
        if (!has_data_) {
            event_name_.clear();
            return true;
        }
        Event ev{event_name_.empty() ? "message" : event_name_, std::move(data_)};
        event_name_.clear();
        data_.clear();
        has_data_ = false;
        return on_event(ev);
    }
    if (line.front() == ':') return true;
    const auto colon = line.find(':');
    std::string_view field = line.substr(0, colon);
    std::string_view value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    if (field == "event") {
        event_name_ = value;
    } else if (field == "data") {
        if (has_data_) data_.push_back('\n');
        data_.append(value);
        has_data_ = true;
    }
    return true;
}

std::string format_event(std::string_view name, std::string_view data) {
    std::string out;
    out.reserve(name.size() + data.size() + 16);
    out.append("event: ").append(name).append("\n");
    std::size_t start = 0;
    while (true) {
        const auto nl = data.find('\n', start);
        out.append("data: ").append(data.substr(start, nl == std::string_view::npos ? nl : nl - start));
        out.push_back('\n');
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    out.push_back('\n');
    return out;
}

}  // namespace groundrag::sse
