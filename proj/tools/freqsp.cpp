// freqsp command-line tool. Results go to stdout in CSV or JSON; progress and
// diagnostics go to stderr.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
// 3 external adapter unavailable.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "freqsp/freqsp.hpp"

namespace fs = std::filesystem;
using namespace freqsp;

namespace {

const std::set<std::string> kKnownKeys = {
    "seed",
    "sweep.levels", "sweep.crfs", "sweep.jobs", "sweep.frames_per_video", "sweep.usm_kernel", "sweep.usm_target",
    "encoder.kind", "encoder.command", "encoder.decode", "encoder.timeout_s", "encoder.metric",
    "encoder.vmaf_path", "encoder.quality_reference", "encoder.complexity", "encoder.quality_gain",
    "encoder.curvature",
    "net.preset", "net.depth", "net.se_free_prefix", "net.width_mult", "net.hf_enabled", "net.input_size",
    "net.downsample_blocks", "net.hf_pool_strides", "net.nlr_reduction", "net.se_reduction",
    "net.hf_removed_planes", "net.patch_block", "net.patch_grid",
    "train.lr", "train.weight_decay", "train.batch", "train.mono_weight", "train.steps",
    "train.frames_per_video", "train.log_every",
};

config::FlatConfig load_config(const std::string& path) {
    config::FlatConfig c = path.empty() ? config::FlatConfig{} : config::FlatConfig::load(path);
    c.check_keys(kKnownKeys);
    return c;
}

std::vector<int> to_ints(const std::vector<double>& v, const std::string& key) {
    std::vector<int> out;
    for (double d : v) {
        if (d != static_cast<int>(d)) throw ConfigError("'" + key + "' must hold integers");
        out.push_back(static_cast<int>(d));
    }
    return out;
}

label::SweepConfig sweep_config(const config::FlatConfig& c) {
    label::SweepConfig s;
    s.levels = c.get_list("sweep.levels", s.levels);
    s.crfs = to_ints(c.get_list("sweep.crfs", {21, 24, 27, 30, 33}), "sweep.crfs");
    s.jobs = static_cast<int>(c.get_long("sweep.jobs", s.jobs));
    s.frames_per_video = static_cast<size_t>(c.get_long("sweep.frames_per_video", 32));
    s.usm_kernel = static_cast<int>(c.get_long("sweep.usm_kernel", s.usm_kernel));
    const std::string target = c.get("sweep.usm_target", "luma");
    if (target != "luma" && target != "all") throw ConfigError("sweep.usm_target must be luma or all");
    s.usm_target = target == "luma" ? sharpen::Target::LumaOnly : sharpen::Target::AllChannels;

    auto& e = s.encoder;
    const std::string kind = c.get("encoder.kind", "synthetic");
    if (kind != "synthetic" && kind != "external") throw ConfigError("encoder.kind must be synthetic or external");
    e.kind = kind == "synthetic" ? codec::EncoderKind::Synthetic : codec::EncoderKind::External;
    e.command_template = c.get("encoder.command", "");
    e.decode_template = c.get("encoder.decode", "");
    e.timeout = std::chrono::milliseconds(static_cast<long>(c.get_double("encoder.timeout_s", 600) * 1000));
    e.metric.kind = codec::parse_metric(c.get("encoder.metric", "vmaf"));
    e.metric.vmaf_binary = c.get("encoder.vmaf_path", "vmaf");
    e.metric.timeout = e.timeout;
    const std::string ref = c.get("encoder.quality_reference", "sharpened");
    if (ref != "sharpened" && ref != "source") throw ConfigError("encoder.quality_reference must be sharpened or source");
    e.quality_reference = ref == "source" ? codec::QualityReference::Source : codec::QualityReference::Sharpened;
    if (c.has("encoder.complexity")) e.synthetic.complexity = c.get_double("encoder.complexity", 1.0);
    if (c.has("encoder.quality_gain")) e.synthetic.quality_gain = c.get_double("encoder.quality_gain", 0.0);
    if (c.has("encoder.curvature")) e.synthetic.curvature = c.get_double("encoder.curvature", 0.0);
    return s;
}

nn::FreqSPConfig net_config(const config::FlatConfig& c) {
    const std::string preset = c.get("net.preset", "desk");
    if (preset != "desk" && preset != "full") throw ConfigError("net.preset must be desk or full");
    nn::FreqSPConfig n = preset == "full" ? nn::FreqSPConfig::full() : nn::FreqSPConfig{};
    n.depth = static_cast<int>(c.get_long("net.depth", n.depth));
    n.se_free_prefix = static_cast<int>(c.get_long("net.se_free_prefix", n.se_free_prefix));
    n.width_mult = c.get_double("net.width_mult", n.width_mult);
    n.hf_enabled = c.get_bool("net.hf_enabled", n.hf_enabled);
    n.input_size = static_cast<int>(c.get_long("net.input_size", n.input_size));
    std::vector<double> ds(n.downsample_blocks.begin(), n.downsample_blocks.end());
    n.downsample_blocks = to_ints(c.get_list("net.downsample_blocks", ds), "net.downsample_blocks");
    const auto strides = to_ints(c.get_list("net.hf_pool_strides", {double(n.hf_pool_strides[0]),
                                                                     double(n.hf_pool_strides[1])}),
                                 "net.hf_pool_strides");
    if (strides.size() != 2) throw ConfigError("net.hf_pool_strides needs two values");
    n.hf_pool_strides = {strides[0], strides[1]};
    n.nlr_reduction = static_cast<int>(c.get_long("net.nlr_reduction", n.nlr_reduction));
    n.se_reduction = static_cast<int>(c.get_long("net.se_reduction", n.se_reduction));
    n.hf_removed_planes = static_cast<int>(c.get_long("net.hf_removed_planes", n.hf_removed_planes));
    n.patch_block = static_cast<int>(c.get_long("net.patch_block", n.patch_block));
    n.patch_grid = static_cast<int>(c.get_long("net.patch_grid", n.patch_grid));
    n.validate();
    return n;
}

nn::TrainConfig train_config(const config::FlatConfig& c) {
    nn::TrainConfig t;
    t.lr = c.get_double("train.lr", t.lr);
    t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
    t.batch = static_cast<int>(c.get_long("train.batch", t.batch));
    t.mono_weight = c.get_double("train.mono_weight", t.mono_weight);
    t.steps = c.get_long("train.steps", t.steps);
    t.log_every = c.get_long("train.log_every", t.log_every);
    t.seed = static_cast<uint64_t>(c.get_long("seed", 0));
    return t;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream o(path, std::ios::binary);
    if (!o) throw IoError("cannot open " + path);
    o << text;
}

std::string fmt6(double v) {
    if (v == 0.0) v = 0.0; // no "-0.000000"
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s = buf;
    return s == "-0.000000" ? "0.000000" : s;
}

std::vector<rd::RdPoint> points_of(const label::LevelSweep& s) {
    std::vector<rd::RdPoint> pts;
    for (const auto& p : s.points) pts.push_back({p.bitrate_kbps, p.quality});
    return pts;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"freqsp: bitrate-aware sharpening level selection"};
    app.require_subcommand(1);
    std::string cfg_path;
    app.add_option("--config,--cfg", cfg_path, "flat 'section.key = value' config file");

    // sharpen
    auto* sh = app.add_subcommand("sharpen", "unsharp-mask a video");
    double amount = 1.0;
    int kernel = 5;
    bool all_channels = false;
    std::string sh_in, sh_out;
    sh->add_option("--amount", amount, "sharpening level in [0, 4]")->required();
    sh->add_option("--kernel", kernel, "odd box kernel size in [3, 13]");
    sh->add_flag("--luma-only", "sharpen luma only (default)");
    sh->add_flag("--all-channels", all_channels, "sharpen every channel");
    sh->add_option("input", sh_in, "raw video file or PNG sequence directory")->required();
    sh->add_option("output", sh_out, "output in the input's format")->required();

    // hf-extract
    auto* hf = app.add_subcommand("hf-extract", "write the high-frequency residual as an FQT1 tensor");
    std::string hf_in, hf_out;
    int removed = 1;
    hf->add_option("--planes", removed, "number of lowest zigzag planes removed per channel");
    hf->add_option("input", hf_in)->required();
    hf->add_option("output", hf_out)->required();

    // bdrate
    auto* bd = app.add_subcommand("bdrate", "Bjontegaard delta between two RD curves");
    std::string anchor_csv, test_csv;
    bool bd_q = false;
    bd->add_option("--anchor", anchor_csv, "CSV with columns bitrate_kbps,quality")->required();
    bd->add_option("--test", test_csv, "CSV with columns bitrate_kbps,quality")->required();
    bd->add_flag("--quality", bd_q, "report the quality delta instead of the bitrate delta");

    // rd-plot
    auto* plot = app.add_subcommand("rd-plot", "SVG plot of RD curves");
    std::vector<std::string> plot_csvs;
    std::string plot_labels, plot_id, plot_out;
    plot->add_option("--csv", plot_csvs, "curve CSV, optionally name=path");
    plot->add_option("--labels", plot_labels, "label manifest to plot a video's sweep from");
    plot->add_option("--id", plot_id, "video id within --labels");
    plot->add_option("--out", plot_out, "output file (stdout by default)");

    // label
    auto* lab = app.add_subcommand("label", "pseudo-label a corpus");
    std::string manifest, labels_out;
    int jobs = 0;
    lab->add_option("--manifest", manifest, "JSONL with {\"id\", \"path\"} per line")->required();
    lab->add_option("--out", labels_out, "JSONL label records (appended, resumable)")->required();
    lab->add_option("--jobs", jobs, "worker threads");

    // train
    auto* tr = app.add_subcommand("train", "train the regressor");
    std::string tr_labels, tr_videos, tr_out;
    long steps = -1;
    long seed = -1;
    bool deterministic = false;
    tr->add_option("--labels", tr_labels)->required();
    tr->add_option("--videos", tr_videos, "base directory for relative video paths");
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--steps", steps);
    tr->add_option("--seed", seed);
    tr->add_flag("--deterministic", deterministic, "single-threaded, bitwise reproducible (always the case)");

    // predict
    auto* pr = app.add_subcommand("predict", "predict a video's sharpening level");
    std::string ckpt, pr_video;
    pr->add_option("--ckpt", ckpt)->required();
    pr->add_option("video", pr_video)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "PLCC and RMSE against labels");
    std::string ev_ckpt, ev_labels, ev_videos;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--labels", ev_labels)->required();
    ev->add_option("--videos", ev_videos, "base directory for relative video paths");

    // bench
    auto* be = app.add_subcommand("bench", "parameters, FLOPs, memory and forward time");
    std::string be_ckpt;
    int runs = 20, warmup = 5;
    be->add_option("--ckpt", be_ckpt, "checkpoint (default: model built from config)");
    be->add_option("--runs", runs);
    be->add_option("--warmup", warmup);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const config::FlatConfig cfg = load_config(cfg_path);

        if (*sh) {
            const sharpen::UsmParams p{amount, kernel,
                                       all_channels ? sharpen::Target::AllChannels : sharpen::Target::LumaOnly};
            const auto fmt = media::detect_format(sh_in);
            media::store_video(sharpen::usm_video(media::load_video(sh_in, fmt), p), sh_out, fmt);
        } else if (*hf) {
            const media::Video v = media::load_video(hf_in);
            const int n = static_cast<int>(v.frames.size());
            nn::Tensor t({n, 3, v.height(), v.width()});
            for (int i = 0; i < n; ++i) {
                const auto r = freq::extract_hf(v.frames[i], removed);
                std::copy(r.data().begin(), r.data().end(), &t.at(i, 0, 0, 0));
            }
            nn::save_tensor(t, hf_out);
        } else if (*bd) {
            const rd::RdCurve a(rd::load_csv(anchor_csv)), b(rd::load_csv(test_csv));
            if (bd_q) {
                const auto r = rd::bd_quality(a, b);
                std::cout << "bd_quality,overlap_low_log10_kbps,overlap_high_log10_kbps\n"
                          << fmt6(r.value) << ',' << fmt6(r.overlap.low) << ',' << fmt6(r.overlap.high) << '\n';
            } else {
                const auto r = rd::bd_rate(a, b);
                std::cout << "bd_rate,overlap_low,overlap_high\n"
                          << fmt6(r.value) << ',' << fmt6(r.overlap.low) << ',' << fmt6(r.overlap.high) << '\n';
            }
        } else if (*plot) {
            std::vector<rd::NamedCurve> curves;
            for (const auto& spec : plot_csvs) {
                const auto eq = spec.find('=');
                const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
                const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
                curves.push_back({name, rd::load_csv(path)});
            }
            if (!plot_labels.empty()) {
                bool found = false;
                for (const auto& r : label::read_labels(plot_labels)) {
                    if (!plot_id.empty() && r.id != plot_id) continue;
                    for (const auto& s : r.levels) curves.push_back({"level " + fmt6(s.level).substr(0, 3), points_of(s)});
                    found = true;
                    break;
                }
                if (!found) throw IoError("no record '" + plot_id + "' in " + plot_labels);
            }
            if (curves.empty()) throw ConfigError("rd-plot needs --csv or --labels");
            write_text(plot_out, rd::plot_svg(curves));
        } else if (*lab) {
            auto sweep = sweep_config(cfg);
            if (jobs > 0) sweep.jobs = jobs;
            const auto stats = label::label_corpus(manifest, labels_out, sweep);
            std::cout << nlohmann::json{{"labeled", stats.labeled},
                                        {"skipped", stats.skipped},
                                        {"failed", stats.failed},
                                        {"encodes", stats.encodes}}
                             .dump()
                      << '\n';
            if (stats.failed > 0) return 2;
        } else if (*tr) {
            const auto ncfg = net_config(cfg);
            auto tcfg = train_config(cfg);
            if (steps >= 0) tcfg.steps = steps;
            if (seed >= 0) tcfg.seed = static_cast<uint64_t>(seed);
            const fs::path base = tr_videos.empty() ? fs::path(tr_labels).parent_path() : fs::path(tr_videos);
            const auto records = label::read_labels(tr_labels);
            const auto frames = static_cast<size_t>(cfg.get_long("train.frames_per_video", 32));
            const auto data = nn::build_dataset(records, base, ncfg, frames, nn::PatchMode::Random, tcfg.seed);
            std::cerr << "training on " << data.size() << " samples from " << records.size() << " records\n";
            nn::FreqSP model(ncfg, tcfg.seed);
            nn::train(model, data, tcfg, [](const nn::EpochLog& e) {
                std::cerr << "step " << e.step << " loss " << e.loss << " plcc " << e.metrics.plcc << " rmse "
                          << e.metrics.rmse << '\n';
            });
            nn::save_checkpoint(model, tr_out);
            std::cout << nlohmann::json{{"checkpoint", tr_out}, {"samples", data.size()}, {"steps", tcfg.steps}}.dump()
                      << '\n';
        } else if (*pr) {
            const auto model = nn::load_checkpoint(ckpt);
            const auto frames = static_cast<size_t>(cfg.get_long("train.frames_per_video", 32));
            std::cout << fmt6(nn::predict_video(model, media::load_video(pr_video), frames)) << '\n';
        } else if (*ev) {
            const auto model = nn::load_checkpoint(ev_ckpt);
            const auto frames = static_cast<size_t>(cfg.get_long("train.frames_per_video", 32));
            const fs::path base = ev_videos.empty() ? fs::path(ev_labels).parent_path() : fs::path(ev_videos);
            std::vector<double> preds, gts;
            for (const auto& r : label::read_labels(ev_labels)) {
                if (!r.ok()) continue;
                preds.push_back(nn::predict_video(model, media::load_video(nn::resolve_video(base, r.path)), frames));
                gts.push_back(r.label);
            }
            const auto m = nn::evaluate(preds, gts);
            std::cout << "metric,value\nn," << preds.size() << "\nplcc," << fmt6(m.plcc) << "\nrmse," << fmt6(m.rmse)
                      << '\n';
        } else if (*be) {
            const nn::FreqSP model = be_ckpt.empty() ? nn::FreqSP(net_config(cfg)) : nn::load_checkpoint(be_ckpt);
            const int s = model.config().input_size;
            const nn::Var img = nn::constant(nn::Tensor({1, 3, s, s}, 0.5));
            const nn::Var hfin = nn::constant(nn::Tensor({1, 3, s, s}, 0.0));
            long long flops = 0;
            for (const auto& l : model.profile()) flops += l.flops;
            const nn::Var probe = model.forward(img, hfin);
            const double act_bytes = static_cast<double>(probe.graph_elements()) * sizeof(double);
            for (int i = 0; i < warmup; ++i) model.forward(img, hfin);
            const auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < runs; ++i) model.forward(img, hfin);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() /
                std::max(runs, 1);
            std::cout << nlohmann::json{{"params", model.parameter_count()},
                                        {"flops", flops},
                                        {"memory_mb", act_bytes / (1024.0 * 1024.0)},
                                        {"runtime_ms", ms},
                                        {"runs", runs},
                                        {"warmup", warmup},
                                        {"threads", 1}}
                             .dump()
                      << '\n';
        }
    } catch (const AdapterUnavailable& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (const auto* ae = dynamic_cast<const AdapterError*>(&e); ae && !ae->output().empty())
            std::cerr << ae->output() << '\n';
        return 2;
    }
    return 0;
}
