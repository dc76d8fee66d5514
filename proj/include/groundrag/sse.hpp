#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace groundrag::sse {

struct Event {
    std::string name;  // "message" when the stream gives no event field
    std::string data;  // multiple data lines joined with '\n'
};

// Incremental server-sent-events decoder. Bytes may arrive split anywhere.
class Parser {
 public:
    using Handler = std::function<bool(const Event&)>;

    // Returns false as soon as the handler does.
    bool feed(std::string_view bytes, const Handler& on_event);

 private:
    bool dispatch_line(std::string_view line, const Handler& on_event);

    std::string pending_;
    std::string event_name_;
    std::string data_;
    bool has_data_ = false;
};

std::string format_event(std::string_view name, std::string_view data);

}  // namespace groundrag::sse
