#pragma once

// Device trace ingestion. Input rows are `timestamp_seconds,device_id,event`
// with event in {wifi_on, wifi_off, charge_on, charge_off}; an optional
// header line is skipped. A device counts as available while both wifi and
// charging are on (unknown initial state = off). Each round of fixed length
// is available when the intersection covers at least half the round, and the
// availability percentage is measured between the device's first observation
// and the trace horizon (explicit, or the latest timestamp seen).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fairfed/availability.hpp"

namespace fairfed {

class TraceParseError : public std::runtime_error {
public:
    TraceParseError(std::size_t line, const std::string& what)
        : std::runtime_error("trace line " + std::to_string(line) + ": " + what),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct DeviceAvailability {
    std::string id;
    std::vector<std::uint8_t> rounds;  // availability per round, round 0 starts at time 0
    double percent = 0.0;              // % of [first observation, horizon] available
    double first_seen = 0.0;
    bool single_event = false;         // one observation only; percent pinned to 0
};

struct TraceParseResult {
    std::vector<DeviceAvailability> devices;  // sorted by device id
    double horizon = 0.0;
    double round_seconds = 0.0;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct RawEvent {
    double ts = 0.0;
    bool is_wifi = false;
    bool turns_on = false;
};

// Closed-open [begin, end) intervals where both conditions hold.
inline std::vector<std::pair<double, double>> on_intervals(std::vector<RawEvent> events,
                                                           double cap) {
    std::stable_sort(events.begin(), events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.ts < b.ts; });
    std::vector<std::pair<double, double>> out;
    bool wifi = false, charge = false;
    double open_at = 0.0;
    bool open = false;
    for (const auto& e : events) {
        const bool was_on = wifi && charge;
        if (e.is_wifi) wifi = e.turns_on;
        else charge = e.turns_on;
        const bool now_on = wifi && charge;
        if (!was_on && now_on) {
            open_at = e.ts;
            open = true;
        } else if (was_on && !now_on && open) {
            if (e.ts > open_at) out.emplace_back(open_at, e.ts);
            open = false;
        }
    }
    if (open && cap > open_at) out.emplace_back(open_at, cap);
    return out;
}

inline double overlap(const std::vector<std::pair<double, double>>& intervals,
                      double a, double b) {
    double total = 0.0;
    for (const auto& [lo, hi] : intervals)
        total += std::max(0.0, std::min(hi, b) - std::max(lo, a));
    return total;
}

}  // namespace detail

inline TraceParseResult parse_device_trace(std::istream& in, double round_seconds,
                                           std::optional<double> horizon = std::nullopt) {
    if (!(round_seconds > 0.0))
        throw std::invalid_argument("trace: round length must be positive seconds");
    if (horizon && !(*horizon > 0.0))
        throw std::invalid_argument("trace: horizon must be positive seconds");

    struct PerDevice {
        std::vector<detail::RawEvent> events;
    };
    std::vector<std::pair<std::string, PerDevice>> devices;  // keeps first-seen order
    auto device_slot = [&](const std::string& id) -> PerDevice& {
        for (auto& [key, v] : devices)
            if (key == id) return v;
        devices.emplace_back(id, PerDevice{});
        return devices.back().second;
    };

    double max_ts = 0.0;
    bool any_event = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;

        std::vector<std::string> fields;
        std::stringstream ss(trimmed);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(detail::trim(field));

        if (fields.size() != 3)
            throw TraceParseError(line_no, "expected timestamp,device_id,event");

        std::size_t consumed = 0;
        double ts = 0.0;
        bool numeric = true;
        try {
            ts = std::stod(fields[0], &consumed);
        } catch (const std::exception&) {
            numeric = false;
        }
        if (!numeric || consumed != fields[0].size()) {
            // Allow a single header row at the top of the file.
            if (line_no == 1 && fields[0].find("timestamp") != std::string::npos) continue;
            throw TraceParseError(line_no, "timestamp is not a number: " + fields[0]);
        }
        if (ts < 0.0 || !std::isfinite(ts))
            throw TraceParseError(line_no, "timestamp must be finite and non-negative");
        if (fields[1].empty()) throw TraceParseError(line_no, "empty device id");

        detail::RawEvent ev;
        ev.ts = ts;
        const std::string& kind = fields[2];
        if (kind == "wifi_on") { ev.is_wifi = true; ev.turns_on = true; }
        else if (kind == "wifi_off") { ev.is_wifi = true; ev.turns_on = false; }
        else if (kind == "charge_on") { ev.is_wifi = false; ev.turns_on = true; }
        else if (kind == "charge_off") { ev.is_wifi = false; ev.turns_on = false; }
        else throw TraceParseError(line_no, "unknown event kind: " + kind);

        device_slot(fields[1]).events.push_back(ev);
        max_ts = std::max(max_ts, ts);
        any_event = true;
    }
    if (!any_event) throw std::invalid_argument("trace: no events");

    TraceParseResult result;
    result.round_seconds = round_seconds;
    result.horizon = horizon.value_or(max_ts);
    if (!(result.horizon > 0.0))
        throw std::invalid_argument("trace: horizon must be positive; supply one explicitly");

    const auto n_rounds = static_cast<std::size_t>(
        std::ceil(result.horizon / round_seconds - 1e-12));

    std::sort(devices.begin(), devices.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [id, dev] : devices) {
        DeviceAvailability out;
        out.id = id;
        double first = std::numeric_limits<double>::infinity();
        for (const auto& e : dev.events) first = std::min(first, e.ts);
        out.first_seen = first;
        out.single_event = dev.events.size() == 1;

        const auto intervals = detail::on_intervals(
            std::move(dev.events), std::max(result.horizon, n_rounds * round_seconds));

        out.rounds.reserve(n_rounds);
        for (std::size_t r = 0; r < n_rounds; ++r) {
            const double start = static_cast<double>(r) * round_seconds;
            const double end = std::min(start + round_seconds, result.horizon);
            const double secs = detail::overlap(intervals, start, end);
            out.rounds.push_back(secs + 1e-9 >= 0.5 * round_seconds ? 1 : 0);
        }

        if (!out.single_event && result.horizon > first) {
            const double secs = detail::overlap(intervals, first, result.horizon);
            out.percent = 100.0 * secs / (result.horizon - first);
        }
        result.devices.push_back(std::move(out));
    }
    return result;
}

inline TraceParseResult parse_device_trace_text(std::string_view text, double round_seconds,
                                                std::optional<double> horizon = std::nullopt) {
    std::istringstream in{std::string(text)};
    return parse_device_trace(in, round_seconds, horizon);
}

// All parsed devices as a trace-driven availability model, clients ordered
// by device id.
inline AvailabilityModel to_availability_model(const TraceParseResult& parsed) {
    std::vector<std::vector<std::uint8_t>> timelines;
    timelines.reserve(parsed.devices.size());
    for (const auto& d : parsed.devices) timelines.push_back(d.rounds);
    return AvailabilityModel::trace_driven(std::move(timelines));
}

}  // namespace fairfed
