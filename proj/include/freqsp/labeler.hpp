#pragma once

// Pseudo-labeling: sharpen each video at every level of the sweep, encode at
// every CRF, fit one RD curve per level and pick the level whose BD-Rate
// against the unsharpened (level 0) curve is lowest.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "freqsp/codec.hpp"
#include "freqsp/error.hpp"
#include "freqsp/media.hpp"
#include "freqsp/rdcurve.hpp"
#include "freqsp/sharpen.hpp"

namespace freqsp::label {

using codec::EncodeResult;
using media::Video;
using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr double kTieTolerance = 1e-12;

struct SweepConfig {
    std::vector<double> levels{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    std::vector<int> crfs{21, 24, 27, 30, 33};
    codec::EncoderAdapter encoder;
    int jobs = 1;
    size_t frames_per_video = 32;
    int usm_kernel = 5;
    sharpen::Target usm_target = sharpen::Target::LumaOnly;

    void validate() const {
        if (levels.empty() || levels.front() != 0.0)
            throw ConfigError("sweep levels must start with the 0.0 anchor");
        for (size_t i = 1; i < levels.size(); ++i)
            if (!(levels[i] > levels[i - 1]))
                throw ConfigError("sweep levels must be sorted ascending and unique");
        if (crfs.size() < 4) throw ConfigError("sweep needs at least 4 CRF values");
        if (jobs < 1) throw ConfigError("jobs must be at least 1");
        encoder.validate();
        sharpen::UsmParams{levels.back(), usm_kernel, usm_target}.validate();
    }
};

struct LevelSweep {
    double level = 0.0;
    std::vector<EncodeResult> points;
    std::optional<rd::BdRateResult> bd; // empty for the anchor
};

struct LabelRecord {
    std::string id;
    std::string path;
    double label = 0.0;
    std::string metric;
    std::vector<LevelSweep> levels;
    std::optional<std::string> error;

    bool ok() const noexcept { return !error.has_value(); }
};

// Failure while labeling one video; carries whatever was measured.
class LabelFailure : public Error {
public:
    LabelFailure(const std::string& what, LabelRecord partial)
        : Error(what), partial_(std::move(partial)) {}
    const LabelRecord& partial() const noexcept { return partial_; }

private:
    LabelRecord partial_;
};

inline void to_json(json& j, const LevelSweep& s) {
    j = {{"level", s.level}, {"points", s.points}};
    if (s.bd) {
        j["bd_rate"] = s.bd->value;
        j["overlap"] = {s.bd->overlap.low, s.bd->overlap.high};
    } else {
        j["bd_rate"] = nullptr;
    }
}

inline void from_json(const json& j, LevelSweep& s) {
    j.at("level").get_to(s.level);
    j.at("points").get_to(s.points);
    s.bd.reset();
    if (j.contains("bd_rate") && !j.at("bd_rate").is_null()) {
        rd::BdRateResult bd;
        bd.value = j.at("bd_rate").get<double>();
        bd.overlap = {j.at("overlap").at(0).get<double>(), j.at("overlap").at(1).get<double>()};
        bd.anchor_level = 0.0;
        bd.test_level = s.level;
        s.bd = bd;
    }
}

inline void to_json(json& j, const LabelRecord& r) {
    j = {{"schema", kSchemaVersion}, {"id", r.id}, {"path", r.path}, {"metric", r.metric},
         {"levels", r.levels}};
    if (r.error)
        j["error"] = *r.error;
    else
        j["label"] = r.label;
}

inline void from_json(const json& j, LabelRecord& r) {
    if (j.value("schema", 0) != kSchemaVersion)
        throw IoError("unsupported label record schema: " + j.value("schema", json()).dump());
    j.at("id").get_to(r.id);
    r.path = j.value("path", std::string());
    r.metric = j.value("metric", std::string());
    r.levels = j.value("levels", std::vector<LevelSweep>{});
    if (j.contains("error")) {
        r.error = j.at("error").get<std::string>();
        r.label = 0.0;
    } else {
        r.error.reset();
        j.at("label").get_to(r.label);
    }
}

// Level with the lowest BD-Rate; the anchor competes with an implicit 0.
// `bd_by_level` must be sorted by level. Ties go to the lower level.
inline double choose_label(const std::vector<std::pair<double, double>>& bd_by_level) {
    double best_level = 0.0, best_value = 0.0;
    for (const auto& [level, value] : bd_by_level)
        if (value < best_value - kTieTolerance) {
            best_level = level;
            best_value = value;
        }
    return best_level;
}

// Runs fn(0..n-1) on at most `jobs` threads. Rethrows the first failure
// after all workers stop.
inline void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
    const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// VMAF falls back to PSNR when the tool is missing.
inline SweepConfig resolve_metric(SweepConfig cfg, std::ostream* log = &std::cerr) {
    auto& m = cfg.encoder.metric;
    if (cfg.encoder.kind == codec::EncoderKind::External && m.kind == codec::MetricKind::VMAF &&
        !process::available(m.vmaf_binary)) {
        if (log) *log << "warning: VMAF tool '" << m.vmaf_binary << "' unavailable, using PSNR\n";
        m.kind = codec::MetricKind::PSNR;
    }
    return cfg;
}

namespace detail_label {

struct SweepSlot {
    std::vector<EncodeResult> points;
    std::string error;
};

inline void sweep_level(const Video& source, double level, const SweepConfig& cfg, SweepSlot& slot,
                        std::atomic<size_t>* encodes) {
    try {
        const Video sharp = sharpen::usm_video(source, {level, cfg.usm_kernel, cfg.usm_target});
        for (int crf : cfg.crfs) {
            slot.points.push_back(codec::encode_measure(sharp, crf, cfg.encoder, {level, &source}));
            if (encodes) ++*encodes;
        }
    } catch (const std::exception& e) {
        slot.error = e.what();
        if (const auto* ae = dynamic_cast<const AdapterError*>(&e); ae && !ae->output().empty())
            slot.error += "\n" + ae->output();
    }
}

// Turns the per-level sweeps into a record, or throws LabelFailure.
inline LabelRecord assemble(std::string id, std::string path, const SweepConfig& cfg,
                            std::vector<SweepSlot>& slots) {
    LabelRecord rec;
    rec.id = std::move(id);
    rec.path = std::move(path);
    rec.metric = cfg.encoder.kind == codec::EncoderKind::Synthetic ? "synthetic"
                                                                   : cfg.encoder.metric.name();
    std::string error;
    for (size_t i = 0; i < cfg.levels.size(); ++i) {
        rec.levels.push_back({cfg.levels[i], std::move(slots[i].points), std::nullopt});
        if (error.empty() && !slots[i].error.empty())
            error = "level " + std::to_string(cfg.levels[i]) + ": " + slots[i].error;
    }
    if (!error.empty()) throw LabelFailure(error, rec);

    auto curve_of = [](const LevelSweep& s) {
        std::vector<rd::RdPoint> pts;
        for (const auto& p : s.points) pts.push_back({p.bitrate_kbps, p.quality});
        return rd::RdCurve(std::move(pts), s.level);
    };
    std::vector<std::pair<double, double>> bd_by_level;
    try {
        const rd::RdCurve anchor = curve_of(rec.levels.front());
        for (size_t i = 1; i < rec.levels.size(); ++i) {
            // a level whose quality range misses the anchor's is not a candidate
            try {
                auto bd = rd::bd_rate(anchor, curve_of(rec.levels[i]));
                rec.levels[i].bd = bd;
                bd_by_level.emplace_back(rec.levels[i].level, bd.value);
            } catch (const NoOverlapError&) {
            }
        }
    } catch (const Error& e) {
        throw LabelFailure(std::string("BD-Rate computation failed: ") + e.what(), rec);
    }
    rec.label = choose_label(bd_by_level);
    return rec;
}

} // namespace detail_label

inline LabelRecord label_video(const Video& v, const SweepConfig& cfg, const std::string& id = "video",
                               const std::string& path = {}) {
    cfg.validate();
    v.validate();
    const Video source = media::sample_frames(v, cfg.frames_per_video);
    std::vector<detail_label::SweepSlot> slots(cfg.levels.size());
    parallel_for(cfg.levels.size(), cfg.jobs, [&](size_t i) {
        detail_label::sweep_level(source, cfg.levels[i], cfg, slots[i], nullptr);
    });
    return detail_label::assemble(id, path, cfg, slots);
}

// ---------------------------------------------------------------------------
// Corpus

struct ManifestEntry {
    std::string id;
    std::string path;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open manifest " + file.string());
    std::vector<ManifestEntry> out;
    std::set<std::string> seen;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            ManifestEntry e{j.at("id").get<std::string>(), j.at("path").get<std::string>()};
            if (!seen.insert(e.id).second) throw IoError("duplicate id '" + e.id + "'");
            out.push_back(std::move(e));
        } catch (const json::exception& e) {
            throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<LabelRecord> read_labels(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open labels " + file.string());
    std::vector<LabelRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line).get<LabelRecord>());
        } catch (const json::exception& e) {
            throw IoError("bad label record in " + file.string() + ": " + e.what());
        }
    }
    return out;
}

struct CorpusStats {
    size_t labeled = 0;
    size_t skipped = 0;
    size_t failed = 0;
    size_t encodes = 0;
};

namespace detail_label {

// Appends lines under an exclusive advisory lock.
class LockedAppender {
public:
    explicit LockedAppender(const std::filesystem::path& p) {
        fd_ = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd_ < 0) throw IoError("cannot open " + p.string() + " for appending");
    }
    LockedAppender(const LockedAppender&) = delete;
    LockedAppender& operator=(const LockedAppender&) = delete;
    ~LockedAppender() { ::close(fd_); }

    void append(const std::string& line) {
        ::flock(fd_, LOCK_EX);
        const std::string data = line + "\n";
        size_t off = 0;
        while (off < data.size()) {
            const ssize_t n = ::write(fd_, data.data() + off, data.size() - off);
            if (n <= 0) {
                ::flock(fd_, LOCK_UN);
                throw IoError("write to label manifest failed");
            }
            off += static_cast<size_t>(n);
        }
        ::flock(fd_, LOCK_UN);
    }

private:
    int fd_ = -1;
};

} // namespace detail_label

// Labels every manifest entry not already labeled successfully in `out_file`
// and appends one JSON line per video, in manifest order. Relative video paths
// resolve against the manifest's directory. Per-video failures become error
// records and are retried on the next run.
inline CorpusStats label_corpus(const std::filesystem::path& manifest, const std::filesystem::path& out_file,
                                const SweepConfig& cfg_in, std::ostream* log = &std::cerr) {
    const SweepConfig cfg = resolve_metric(cfg_in, log);
    cfg.validate();
    const auto entries = read_manifest(manifest);
    CorpusStats stats;

    std::set<std::string> done;
    if (std::filesystem::exists(out_file))
        for (const auto& r : read_labels(out_file))
            if (r.ok()) done.insert(r.id);

    std::vector<ManifestEntry> pending;
    for (const auto& e : entries) {
        if (done.count(e.id))
            ++stats.skipped;
        else
            pending.push_back(e);
    }
    detail_label::LockedAppender out(out_file);
    if (pending.empty()) return stats;

    const auto base = manifest.parent_path();
    std::atomic<size_t> encodes{0};
    const size_t chunk = static_cast<size_t>(cfg.jobs);
    for (size_t start = 0; start < pending.size(); start += chunk) {
        const size_t count = std::min(chunk, pending.size() - start);
        std::vector<std::optional<Video>> videos(count);
        std::vector<std::string> load_errors(count);
        parallel_for(count, cfg.jobs, [&](size_t i) {
            try {
                const std::filesystem::path p = pending[start + i].path;
                const Video v = media::load_video(p.is_absolute() ? p : base / p);
                v.validate();
                videos[i] = media::sample_frames(v, cfg.frames_per_video);
            } catch (const std::exception& e) {
                load_errors[i] = e.what();
            }
        });

        const size_t L = cfg.levels.size();
        std::vector<std::vector<detail_label::SweepSlot>> slots(count, std::vector<detail_label::SweepSlot>(L));
        parallel_for(count * L, cfg.jobs, [&](size_t task) {
            const size_t vi = task / L, li = task % L;
            if (!videos[vi]) return;
            detail_label::sweep_level(*videos[vi], cfg.levels[li], cfg, slots[vi][li], &encodes);
        });

        for (size_t i = 0; i < count; ++i) {
            const auto& entry = pending[start + i];
            LabelRecord rec;
            if (!videos[i]) {
                rec = {entry.id, entry.path, 0.0, {}, {}, "cannot load video: " + load_errors[i]};
            } else {
                try {
                    rec = detail_label::assemble(entry.id, entry.path, cfg, slots[i]);
                } catch (const LabelFailure& f) {
                    rec = f.partial();
                    rec.error = f.what();
                }
            }
            if (rec.ok()) {
                ++stats.labeled;
            } else {
                ++stats.failed;
                if (log) *log << "error: " << entry.id << ": " << *rec.error << "\n";
            }
            out.append(json(rec).dump());
        }
    }
    stats.encodes = encodes.load();
    return stats;
}

} // namespace freqsp::label
