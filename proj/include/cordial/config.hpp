#pragma once

// Run and sweep configuration files (JSON).  Errors carry the line they
// refer to.  A sweep expands the base scenario over lists of n, f, model,
// adversary kind and batch size, times a range of seeds.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "cordial/simnet.hpp"

namespace cordial {

class ConfigError : public Error {
public:
    ConfigError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

namespace detail {

inline std::size_t line_at(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

/// Line of the first `"key"` followed by a colon, or 0.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
    const std::string quoted = "\"" + key + "\"";
    for (std::size_t at = text.find(quoted); at != std::string::npos; at = text.find(quoted, at + 1)) {
        std::size_t k = at + quoted.size();
        while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
        if (k < text.size() && text[k] == ':') return line_at(text, at);
    }
    return 0;
}

/// Best guess at the line a validation message is about: the first word of
/// the message that names a key present in the document.
inline std::size_t blame_line(const std::string& text, const std::string& message) {
    std::string word;
    auto try_word = [&]() -> std::size_t {
        std::size_t l = word.empty() ? 0 : line_of_key(text, word);
        word.clear();
        return l;
    };
    for (char c : message) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word += c;
        } else if (std::size_t l = try_word()) {
            return l;
        }
    }
    if (std::size_t l = try_word()) return l;
    if (message.starts_with("more Byzantine")) return line_of_key(text, "byzantine");
    return 0;
}

inline Json parse_document(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(line_at(text, e.byte ? e.byte - 1 : 0), "invalid JSON");
    }
}

}  // namespace detail

struct OutputPaths {
    std::string transcript;
    std::string metrics;
    std::string deliveries;
};

struct SweepAxes {
    std::vector<std::uint32_t> n;
    std::vector<std::uint32_t> f;
    std::vector<std::string> model;
    std::vector<std::string> adversary;
    std::vector<std::uint32_t> batch;
    std::uint64_t seed_start = 1;
    std::uint64_t seeds = 1;
};

struct RunConfig {
    Json scenario_json = Json::object();
    Scenario scenario;
    OutputPaths output;
    std::optional<SweepAxes> sweep;
    unsigned workers = 1;
    std::string text;
};

/// Parses a config document.  Top-level keys: scenario, output, sweep,
/// workers.  The scenario section uses the transcript header's key names.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    cfg.text = text;
    Json doc = detail::parse_document(text);
    auto fail = [&](const std::string& key, const std::string& why) -> ConfigError {
        return ConfigError(detail::line_of_key(text, key), why);
    };
    if (!doc.is_object()) throw ConfigError(1, "config must be a JSON object");
    for (const auto& [key, value] : doc.items())
        if (key != "scenario" && key != "output" && key != "sweep" && key != "workers")
            throw fail(key, "unknown key '" + key + "'");

    if (doc.contains("scenario")) cfg.scenario_json = doc.at("scenario");
    try {
        cfg.scenario = scenario_from_json(cfg.scenario_json);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(detail::blame_line(text, e.what()), e.what());
    }

    if (doc.contains("output")) {
        const Json& o = doc.at("output");
        if (!o.is_object()) throw fail("output", "output must be an object");
        for (const auto& [key, value] : o.items()) {
            if (!value.is_string()) throw fail(key, "output paths must be strings");
            if (key == "transcript")
                cfg.output.transcript = value;
            else if (key == "metrics")
                cfg.output.metrics = value;
            else if (key == "deliveries")
                cfg.output.deliveries = value;
            else
                throw fail(key, "unknown output '" + key + "'");
        }
    }

    if (doc.contains("workers")) {
        if (!doc.at("workers").is_number_unsigned()) throw fail("workers", "workers must be a non-negative integer");
        cfg.workers = std::max(1u, doc.at("workers").get<unsigned>());
    }

    if (doc.contains("sweep")) {
        const Json& s = doc.at("sweep");
        if (!s.is_object()) throw fail("sweep", "sweep must be an object");
        SweepAxes ax;
        auto uints = [&](const std::string& key, std::vector<std::uint32_t>& out) {
            for (const Json& v : s.at(key)) {
                if (!v.is_number_unsigned()) throw fail(key, "'" + key + "' entries must be non-negative integers");
                out.push_back(v.get<std::uint32_t>());
            }
        };
        auto strings = [&](const std::string& key, std::vector<std::string>& out) {
            for (const Json& v : s.at(key)) {
                if (!v.is_string()) throw fail(key, "'" + key + "' entries must be strings");
                out.push_back(v.get<std::string>());
            }
        };
        for (const auto& [key, value] : s.items()) {
            if ((key == "n" || key == "f" || key == "model" || key == "adversary" || key == "batch") && !value.is_array())
                throw fail(key, "'" + key + "' must be a list");
            if (key == "n")
                uints(key, ax.n);
            else if (key == "f")
                uints(key, ax.f);
            else if (key == "batch")
                uints(key, ax.batch);
            else if (key == "model")
                strings(key, ax.model);
            else if (key == "adversary")
                strings(key, ax.adversary);
            else if (key == "seeds" || key == "seedStart") {
                if (!value.is_number_unsigned()) throw fail(key, "'" + key + "' must be a non-negative integer");
                (key == "seeds" ? ax.seeds : ax.seed_start) = value.get<std::uint64_t>();
            } else {
                throw fail(key, "unknown sweep axis '" + key + "'");
            }
        }
        cfg.sweep = ax;
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

/// One sweep point, before seeds are applied.
struct SweepPoint {
    Json scenario;
    std::string error;
};

/// The cartesian product of the sweep axes over the base scenario.  Points
/// that fail validation keep their error and are reported, not dropped.
inline std::vector<SweepPoint> sweep_points(const RunConfig& cfg) {
    const SweepAxes ax = cfg.sweep.value_or(SweepAxes{});
    auto or_base = [&](const char* key, auto values) {
        using V = typename decltype(values)::value_type;
        std::vector<std::optional<V>> out;
        for (const auto& v : values) out.push_back(v);
        if (out.empty()) out.push_back(std::nullopt);
        (void)key;
        return out;
    };
    std::vector<SweepPoint> points;
    for (auto n : or_base("n", ax.n))
        for (auto f : or_base("f", ax.f))
            for (auto model : or_base("model", ax.model))
                for (auto adv : or_base("adversary", ax.adversary))
                    for (auto batch : or_base("batch", ax.batch)) {
                        Json j = cfg.scenario_json.is_object() ? cfg.scenario_json : Json::object();
                        if (n) {
                            j["n"] = *n;
                            if (!f && !cfg.scenario_json.contains("f")) j.erase("f");
                            if (!batch && !cfg.scenario_json.contains("batch")) j.erase("batch");
                        }
                        if (f) j["f"] = *f;
                        if (model) j["model"] = *model;
                        if (adv) j["adversary"]["kind"] = *adv;
                        if (batch) j["batch"] = *batch;
                        SweepPoint p{j, {}};
                        try {
                            scenario_from_json(j);
                        } catch (const Error& e) {
                            p.error = e.what();
                        }
                        points.push_back(std::move(p));
                    }
    return points;
}

struct SweepRow {
    std::size_t point = 0;
    std::uint64_t seed = 0;
    Scenario scenario;
    std::optional<Metrics> metrics;
    std::string error;
};

inline double percentile(std::vector<Round> v, double q) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(k, 1, v.size()) - 1];
}

/// Runs every (point, seed) pair, on `workers` threads.  Rows come back
/// ordered by point then seed regardless of scheduling.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
    const SweepAxes ax = cfg.sweep.value_or(SweepAxes{});
    auto points = sweep_points(cfg);
    std::vector<SweepRow> rows;
    for (std::size_t p = 0; p < points.size(); ++p)
        for (std::uint64_t k = 0; k < ax.seeds; ++k) rows.push_back({p, ax.seed_start + k, {}, {}, points[p].error});

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            SweepRow& row = rows[i];
            if (!row.error.empty()) continue;
            try {
                Json j = points[row.point].scenario;
                j["seed"] = row.seed;
                row.scenario = scenario_from_json(j);
                row.scenario.record = false;
                Simulation sim(row.scenario);
                row.metrics = sim.run();
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < cfg.workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return rows;
}

inline std::string sweep_csv(const RunConfig& cfg, const std::vector<SweepRow>& rows) {
    auto points = sweep_points(cfg);
    std::ostringstream out;
    out << std::setprecision(6);
    out << "point,n,f,model,adversary,batch,seed,status,mean_latency,p50_latency,p90_latency,mean_commit_latency,"
           "decisions,skipped,messages,bytes,payloads,bytes_per_payload,error\n";
    auto describe = [&](std::size_t p, const std::optional<Scenario>& s) {
        const Json& j = points[p].scenario;
        std::ostringstream o;
        o << p << ',';
        if (s)
            o << s->n << ',' << s->f << ',' << to_string(s->model) << ',' << to_string(s->adversary.kind) << ','
              << s->batch;
        else
            o << j.value("n", Json()).dump() << ',' << j.value("f", Json()).dump() << ",,,";
        return o.str();
    };
    auto quote = [](std::string s) {
        std::replace(s.begin(), s.end(), '"', '\'');
        return "\"" + s + "\"";
    };
    std::size_t p = 0;
    std::size_t begin = 0;
    while (begin < rows.size()) {
        std::size_t end = begin;
        while (end < rows.size() && rows[end].point == rows[begin].point) ++end;
        p = rows[begin].point;
        std::vector<Round> slots, commits;
        std::uint64_t decisions = 0, skipped = 0, messages = 0, bytes = 0, payloads = 0, ok = 0;
        std::optional<Scenario> sc;
        for (std::size_t i = begin; i < end; ++i) {
            const SweepRow& r = rows[i];
            if (r.metrics) sc = r.scenario;
            out << describe(p, r.metrics ? std::optional<Scenario>(r.scenario) : std::nullopt) << ',' << r.seed << ',';
            if (!r.metrics) {
                out << "error,,,,,,,,,,," << quote(r.error) << '\n';
                continue;
            }
            const Metrics& m = *r.metrics;
            ++ok;
            out << "ok," << Metrics::mean(m.slot_latencies) << ',' << percentile(m.slot_latencies, 0.5) << ','
                << percentile(m.slot_latencies, 0.9) << ',' << Metrics::mean(m.commit_latencies) << ','
                << m.waves_decided << ',' << m.waves_skipped << ',' << m.messages_sent << ',' << m.bytes_sent << ','
                << m.payloads_delivered << ',' << m.bytes_per_payload() << ",\n";
            slots.insert(slots.end(), m.slot_latencies.begin(), m.slot_latencies.end());
            commits.insert(commits.end(), m.commit_latencies.begin(), m.commit_latencies.end());
            decisions += m.waves_decided;
            skipped += m.waves_skipped;
            messages += m.messages_sent;
            bytes += m.bytes_sent;
            payloads += m.payloads_delivered;
        }
        out << describe(p, sc) << ",all," << (ok == end - begin ? "ok" : "partial") << ',' << Metrics::mean(slots)
            << ',' << percentile(slots, 0.5) << ',' << percentile(slots, 0.9) << ',' << Metrics::mean(commits) << ','
            << decisions << ',' << skipped << ',' << messages << ',' << bytes << ',' << payloads << ','
            << (payloads ? static_cast<double>(bytes) / static_cast<double>(payloads) : 0.0) << ",\n";
        begin = end;
    }
    return out.str();
}

}  // namespace cordial
