#include "lobdif/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace lobdif::ingest {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
    field = trim(field);
    T value{};
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc{} || ptr != last) {
        throw ParseError(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
    }
    return value;
}

std::vector<std::string_view> split_fields(std::string_view row) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = row.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(row.substr(start));
            return out;
        }
        out.push_back(row.substr(start, comma - start));
        start = comma + 1;
    }
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        fn(line_no, trim(text.substr(start, end - start)));
        start = end + 1;
    }
}

} // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void EventStream::validate() const {
    if (num_classes < 1) throw std::invalid_argument("event stream: num_classes must be positive");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& ev = events[i];
        if (!(ev.t >= 0.0) || !std::isfinite(ev.t)) {
            throw std::invalid_argument("event " + std::to_string(i) + ": invalid time");
        }
        if (ev.e < 0 || ev.e >= num_classes) {
            throw std::invalid_argument("event " + std::to_string(i) + ": class " + std::to_string(ev.e) +
                                        " outside [0," + std::to_string(num_classes) + ")");
        }
        if (i > 0 && ev.t < events[i - 1].t) {
            throw std::invalid_argument("event " + std::to_string(i) + ": time decreases");
        }
    }
}

std::vector<RawMessage> parse_lobster(std::string_view text) {
    std::vector<RawMessage> out;
    for_each_line(text, [&](std::size_t line, std::string_view row) {
        if (row.empty()) return;
        const auto fields = split_fields(row);
        if (fields.size() != 6) {
            throw ParseError(line, "expected 6 fields, found " + std::to_string(fields.size()));
        }
        RawMessage m;
        m.time = parse_number<double>(fields[0], line, "time");
        m.msg_type = parse_number<int>(fields[1], line, "type");
        m.order_id = parse_number<std::int64_t>(fields[2], line, "order id");
        m.size = parse_number<std::int64_t>(fields[3], line, "size");
        m.price = parse_number<std::int64_t>(fields[4], line, "price");
        m.direction = parse_number<int>(fields[5], line, "direction");
        if (!(m.time >= 0.0) || !std::isfinite(m.time)) throw ParseError(line, "time must be non-negative");
        if (m.msg_type < 1 || m.msg_type > 7) throw ParseError(line, "type must be in 1..7");
        if (m.direction != 1 && m.direction != -1) throw ParseError(line, "direction must be 1 or -1");
        out.push_back(m);
    });
    return out;
}

std::string serialize_lobster(const std::vector<RawMessage>& messages) {
    std::string out;
    for (const RawMessage& m : messages) {
        out += format_double(m.time);
        out += ',' + std::to_string(m.msg_type) + ',' + std::to_string(m.order_id) + ',' + std::to_string(m.size) +
               ',' + std::to_string(m.price) + ',' + std::to_string(m.direction) + '\n';
    }
    return out;
}

ClassMapping ClassMapping::standard() {
    ClassMapping m;
    m.by_type[1] = {0, 2};
    m.by_type[2] = {1, 3};
    m.by_type[3] = {1, 3};
    return m;
}

std::optional<EventClass> map_event_class(int msg_type, int direction, const ClassMapping& mapping) {
    if (msg_type < 1 || msg_type > 7) return std::nullopt;
    const auto& entry = mapping.by_type[static_cast<std::size_t>(msg_type)];
    if (direction == 1) return entry.buy;
    if (direction == -1) return entry.sell;
    return std::nullopt;
}

MappedStream to_event_stream(const std::vector<RawMessage>& messages, const ClassMapping& mapping,
                             int num_classes) {
    MappedStream out;
    out.stream.num_classes = num_classes;
    out.parsed = messages.size();
    out.histogram.assign(static_cast<std::size_t>(num_classes), 0);
    for (const RawMessage& m : messages) {
        const auto cls = map_event_class(m.msg_type, m.direction, mapping);
        if (!cls) {
            ++out.dropped;
            continue;
        }
        if (*cls < 0 || *cls >= num_classes) {
            throw std::invalid_argument("mapping produced class " + std::to_string(*cls) + " outside [0," +
                                        std::to_string(num_classes) + ")");
        }
        out.stream.events.push_back({m.time, *cls});
        ++out.histogram[static_cast<std::size_t>(*cls)];
        ++out.mapped;
    }
    out.stream.validate();
    return out;
}

double NormStats::standardize(double dt) const {
    return (std::log10(std::max(dt, floor_dt)) - mean_log_dt) / std_log_dt;
}

double NormStats::destandardize(double raw) const {
    return std::max(std::pow(10.0, raw * std_log_dt + mean_log_dt), floor_dt);
}

NormStats normalize_times(const EventStream& training, double floor_dt) {
    if (training.size() < 2) throw std::invalid_argument("normalize_times: need at least 2 events");
    if (!(floor_dt > 0.0)) throw std::invalid_argument("normalize_times: floor_dt must be positive");
    std::vector<double> logs;
    logs.reserve(training.size() - 1);
    for (std::size_t i = 1; i < training.size(); ++i) {
        const double dt = training.events[i].t - training.events[i - 1].t;
        logs.push_back(std::log10(std::max(dt, floor_dt)));
    }
    double mean = 0.0;
    for (double v : logs) mean += v;
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (double v : logs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(logs.size());
    NormStats stats;
    stats.mean_log_dt = mean;
    // equal gaps recovered from timestamps differ only by rounding
    stats.std_log_dt = std::sqrt(var) < 1e-9 ? 1.0 : std::sqrt(var);
    stats.floor_dt = floor_dt;
    return stats;
}

std::vector<TrainingPair> build_windows(const EventStream& stream, std::size_t L) {
    if (L == 0) throw std::invalid_argument("build_windows: L must be positive");
    if (stream.size() <= L) {
        throw std::invalid_argument("build_windows: stream of " + std::to_string(stream.size()) +
                                    " events is too short for L=" + std::to_string(L));
    }
    std::vector<TrainingPair> out;
    out.reserve(stream.size() - L);
    for (std::size_t j = 0; j + L < stream.size(); ++j) {
        TrainingPair pair;
        pair.context.assign(stream.events.begin() + static_cast<std::ptrdiff_t>(j),
                            stream.events.begin() + static_cast<std::ptrdiff_t>(j + L));
        pair.target = stream.events[j + L];
        out.push_back(std::move(pair));
    }
    return out;
}

Splits split_stream(const EventStream& stream, double train_fraction, double valid_fraction, double test_fraction,
                    std::size_t L) {
    if (!(train_fraction > 0.0) || !(valid_fraction > 0.0) || !(test_fraction > 0.0)) {
        throw std::invalid_argument("split_stream: every fraction must be positive");
    }
    if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-9) {
        throw std::invalid_argument("split_stream: fractions must sum to 1");
    }
    const auto total = static_cast<double>(stream.size());
    const auto n_train = static_cast<std::size_t>(std::floor(total * train_fraction + 1e-9));
    const auto n_valid = static_cast<std::size_t>(std::floor(total * valid_fraction + 1e-9));
    if (n_train + n_valid > stream.size()) throw std::invalid_argument("split_stream: inconsistent sizes");
    const std::size_t n_test = stream.size() - n_train - n_valid;

    auto slice = [&](std::size_t begin, std::size_t count, const char* which) {
        if (count < L + 1) {
            throw std::invalid_argument(std::string("split_stream: ") + which + " split has " +
                                        std::to_string(count) + " events, need at least " + std::to_string(L + 1));
        }
        EventStream part;
        part.num_classes = stream.num_classes;
        part.events.assign(stream.events.begin() + static_cast<std::ptrdiff_t>(begin),
                           stream.events.begin() + static_cast<std::ptrdiff_t>(begin + count));
        return part;
    };
    Splits s;
    s.train = slice(0, n_train, "train");
    s.valid = slice(n_train, n_valid, "valid");
    s.test = slice(n_train + n_valid, n_test, "test");
    return s;
}

EventStream read_events_csv(std::string_view text, int num_classes) {
    EventStream stream;
    bool header_seen = false;
    int max_class = -1;
    for_each_line(text, [&](std::size_t line, std::string_view row) {
        if (row.empty()) return;
        if (!header_seen) {
            header_seen = true;
            if (row != "t,e") throw ParseError(line, "expected header 't,e'");
            return;
        }
        const auto fields = split_fields(row);
        if (fields.size() != 2) throw ParseError(line, "expected 2 fields");
        Event ev;
        ev.t = parse_number<double>(fields[0], line, "time");
        ev.e = parse_number<int>(fields[1], line, "class");
        if (ev.e < 0) throw ParseError(line, "negative class");
        max_class = std::max(max_class, ev.e);
        stream.events.push_back(ev);
    });
    if (!header_seen) throw ParseError(1, "missing header 't,e'");
    stream.num_classes = num_classes > 0 ? num_classes : std::max(max_class + 1, 1);
    stream.validate();
    return stream;
}

std::string write_events_csv(const EventStream& stream) {
    std::string out = "t,e\n";
    for (const Event& ev : stream.events) {
        out += format_double(ev.t);
        out += ',';
        out += std::to_string(ev.e);
        out += '\n';
    }
    return out;
}

} // namespace lobdif::ingest
