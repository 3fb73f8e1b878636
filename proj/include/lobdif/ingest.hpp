#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lobdif::ingest {

/// One row of a LOBSTER message file.
struct RawMessage {
    double time = 0.0; // seconds after midnight
    int msg_type = 0;  // 1..7
    std::int64_t order_id = 0;
    std::int64_t size = 0;
    std::int64_t price = 0;
    int direction = 0; // +1 buy, -1 sell

    friend bool operator==(const RawMessage&, const RawMessage&) = default;
};

/// Class codes: bid-submit 0, bid-cancel 1, ask-submit 2, ask-cancel 3.
using EventClass = int;

struct Event {
    double t = 0.0;
    EventClass e = 0;

    friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
    std::vector<Event> events;
    int num_classes = 4;

    [[nodiscard]] std::size_t size() const noexcept { return events.size(); }
    /// Throws if times decrease, a time is negative, or a class is out of range.
    void validate() const;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

[[nodiscard]] std::vector<RawMessage> parse_lobster(std::string_view text);
[[nodiscard]] std::string serialize_lobster(const std::vector<RawMessage>& messages);

/// Which LOBSTER message types map to which event classes. Indexed by
/// msg_type 1..7; each entry holds the class for buy and sell directions.
struct ClassMapping {
    struct Entry {
        std::optional<EventClass> buy;
        std::optional<EventClass> sell;
    };
    std::array<Entry, 8> by_type{};

    /// Submissions (1) and cancellations (2 partial, 3 full); executions (4, 5)
    /// and halts (7) are dropped.
    static ClassMapping standard();
};

[[nodiscard]] std::optional<EventClass> map_event_class(int msg_type, int direction,
                                                        const ClassMapping& mapping = ClassMapping::standard());

struct MappedStream {
    EventStream stream;
    std::size_t parsed = 0;
    std::size_t mapped = 0;
    std::size_t dropped = 0;
    std::vector<std::size_t> histogram;
};

[[nodiscard]] MappedStream to_event_stream(const std::vector<RawMessage>& messages,
                                           const ClassMapping& mapping = ClassMapping::standard(),
                                           int num_classes = 4);

inline constexpr double kFloorDt = 1e-9;

struct NormStats {
    double mean_log_dt = 0.0;
    double std_log_dt = 1.0;
    double floor_dt = kFloorDt;

    [[nodiscard]] double standardize(double dt) const;
    [[nodiscard]] double destandardize(double raw) const;

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Mean/std of log10 inter-arrival times over `training`. A (near-)zero
/// spread is replaced by 1.
[[nodiscard]] NormStats normalize_times(const EventStream& training, double floor_dt = kFloorDt);

struct TrainingPair {
    std::vector<Event> context;
    Event target;
};

[[nodiscard]] std::vector<TrainingPair> build_windows(const EventStream& stream, std::size_t L);

struct Splits {
    EventStream train;
    EventStream valid;
    EventStream test;
};

/// Contiguous chronological split. Every part must hold at least L+1 events.
[[nodiscard]] Splits split_stream(const EventStream& stream, double train_fraction, double valid_fraction,
                                  double test_fraction, std::size_t L);

[[nodiscard]] EventStream read_events_csv(std::string_view text, int num_classes = 0);
[[nodiscard]] std::string write_events_csv(const EventStream& stream);

[[nodiscard]] std::string format_double(double value);

} // namespace lobdif::ingest
