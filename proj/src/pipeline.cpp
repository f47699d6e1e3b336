// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "scorediff/error.hpp"
#include "scorediff/metrics.hpp"

namespace scorediff {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Paths

namespace {

fs::path or_default(const fs::path& p, const fs::path& dir, const char* name) { return p.empty() ? dir / name : p; }

}  // namespace

fs::path RunConfig::dataset_path() const { return or_default(paths.dataset, out_dir, "dataset.json"); }
fs::path RunConfig::modes_path() const { return or_default(paths.modes, out_dir, "modes.json"); }
fs::path RunConfig::checkpoint_path() const { return or_default(paths.checkpoint, out_dir, "checkpoint.json"); }
fs::path RunConfig::samples_path() const { return or_default(paths.samples, out_dir, "samples.json"); }
fs::path RunConfig::coverage_dataset_path() const { return paths.coverage_dataset.empty() ? dataset_path() : paths.coverage_dataset; }

// ---------------------------------------------------------------------------
// Config document

json run_config_to_json(const RunConfig& c) {
    const SynthConfig& s = c.synth.data;
    const DenoiserConfig& m = c.model;
    const TrainConfig& t = c.train.optim;
    const SamplerConfig& sp = c.sample.sampler;
    const MultiplicityConfig& k = c.kp_study;
    json doc;
    doc["seed"] = c.seed;
    doc["out_dir"] = c.out_dir.string();
    doc["paths"] = {{"dataset", c.paths.dataset.string()},
                    {"modes", c.paths.modes.string()},
                    {"checkpoint", c.paths.checkpoint.string()},
                    {"samples", c.paths.samples.string()},
                    {"coverage_dataset", c.paths.coverage_dataset.string()}};
    doc["synth"] = {{"num_videos", s.num_videos},       {"frames_per_video", s.frames_per_video},
                    {"feature_dim", s.feature_dim},     {"num_annotators", s.num_annotators},
                    {"num_modes", s.num_modes},         {"mode_noise", s.mode_noise},
                    {"feature_noise", s.feature_noise}, {"fps", s.fps},
                    {"holdout_per_mode", c.synth.holdout_per_mode}};
    doc["model"] = {{"input_dim", m.input_dim},
                    {"hidden_dim", m.hidden_dim},
                    {"num_heads", m.num_heads},
                    {"ffn_dim", m.ffn_dim},
                    {"encoder_layers", m.encoder_layers},
                    {"decoder_layers", m.decoder_layers},
                    {"codebook_size", m.codebook_size},
                    {"decoder_self_attention", m.decoder_self_attention},
                    {"num_train_steps", m.num_train_steps},
                    {"logit_eps", m.logit_eps}};
    doc["train"] = {{"learning_rate", t.learning_rate},
                    {"weight_decay", t.weight_decay},
                    {"batch_size", t.batch_size},
                    {"epochs", t.epochs},
                    {"ema_decay", t.ema_decay},
                    {"cond_dropout_prob", t.cond_dropout_prob},
                    {"schedule", to_string(t.schedule)},
                    {"checkpoint_every", c.train.checkpoint_every},
                    {"resume", c.train.resume},
                    {"stop_after_epochs", c.train.stop_after_epochs}};
    doc["sample"] = {{"num_steps", sp.num_steps},
                     {"eta", sp.eta},
                     {"cfg_weight", sp.cfg_weight},
                     {"sag_enabled", sp.sag_enabled},
                     {"sag_scale", sp.sag_scale},
                     {"sag_threshold", sp.sag_threshold},
                     {"sag_blur_sigma", sp.sag_blur_sigma},
                     {"num_samples", c.sample.num_samples},
                     {"summarize", c.sample.summarize},
                     {"rho", c.sample.rho},
                     {"use_ema", c.sample.use_ema},
                     {"workers", c.sample.workers}};
    doc["segment"] = {{"max_segments", c.segment.max_segments}, {"penalty", c.segment.penalty}};
    doc["evaluate"] = {{"coverage_threshold", c.evaluate.coverage_threshold},
                       {"rho", c.evaluate.rho},
                       {"workers", c.evaluate.workers}};
    doc["kp_study"] = {{"num_items", k.num_items},
                       {"bins", k.bins},
                       {"trials", k.trials},
                       {"rho", k.rho},
                       {"min_weight", k.min_weight},
                       {"max_weight", k.max_weight},
                       {"perturbation_scale", k.perturbation_scale},
                       {"quantize", k.quantize},
                       {"enumeration_limit", k.enumeration_limit},
                       {"workers", k.workers}};
    return doc;
}

namespace {

void check_known_keys(const json& doc, const json& reference, const std::string& prefix) {
    if (!doc.is_object()) throw ConfigError("config: '" + (prefix.empty() ? std::string("<root>") : prefix) + "' must be an object");
    for (const auto& [key, value] : doc.items()) {
        const std::string dotted = prefix.empty() ? key : prefix + "." + key;
        if (!reference.contains(key)) throw ConfigError("config: unknown key '" + dotted + "'");
        if (reference[key].is_object()) check_known_keys(value, reference[key], dotted);
    }
}

// Typed read of doc[section][key] with a ConfigError naming the key.
class Reader {
public:
    explicit Reader(const json& doc) : doc_(doc) {}

    template <typename T>
    void operator()(const char* section, const char* key, T& out) const {
        const std::string dotted = std::string(section) + "." + key;
        try {
            const json& v = doc_.at(section).at(key);
            if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
                if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError("config: '" + dotted + "' must be non-negative");
                if (!v.is_number_integer()) throw ConfigError("config: '" + dotted + "' must be an integer");
            }
            if constexpr (std::is_same_v<T, int>)
                if (!v.is_number_integer()) throw ConfigError("config: '" + dotted + "' must be an integer");
            if constexpr (std::is_same_v<T, bool>)
                if (!v.is_boolean()) throw ConfigError("config: '" + dotted + "' must be true or false");
            out = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + dotted + "': " + e.what());
        }
    }

    void path(const char* section, const char* key, fs::path& out) const {
        std::string s;
        (*this)(section, key, s);
        out = s;
    }

private:
    const json& doc_;
};

}  // namespace

RunConfig run_config_from_json(const json& input) {
    const json defaults = run_config_to_json(RunConfig{});
    check_known_keys(input, defaults, "");
    json doc = defaults;
    doc.merge_patch(input);

    RunConfig c;
    try {
        if (!doc.at("seed").is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.out_dir = doc.at("out_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const Reader rd(doc);
    rd.path("paths", "dataset", c.paths.dataset);
    rd.path("paths", "modes", c.paths.modes);
    rd.path("paths", "checkpoint", c.paths.checkpoint);
    rd.path("paths", "samples", c.paths.samples);
    rd.path("paths", "coverage_dataset", c.paths.coverage_dataset);

    SynthConfig& s = c.synth.data;
    rd("synth", "num_videos", s.num_videos);
    rd("synth", "frames_per_video", s.frames_per_video);
    rd("synth", "feature_dim", s.feature_dim);
    rd("synth", "num_annotators", s.num_annotators);
    rd("synth", "num_modes", s.num_modes);
    rd("synth", "mode_noise", s.mode_noise);
    rd("synth", "feature_noise", s.feature_noise);
    rd("synth", "fps", s.fps);
    rd("synth", "holdout_per_mode", c.synth.holdout_per_mode);

    DenoiserConfig& m = c.model;
    rd("model", "input_dim", m.input_dim);
    rd("model", "hidden_dim", m.hidden_dim);
    rd("model", "num_heads", m.num_heads);
    rd("model", "ffn_dim", m.ffn_dim);
    rd("model", "encoder_layers", m.encoder_layers);
    rd("model", "decoder_layers", m.decoder_layers);
    rd("model", "codebook_size", m.codebook_size);
    rd("model", "decoder_self_attention", m.decoder_self_attention);
    rd("model", "num_train_steps", m.num_train_steps);
    rd("model", "logit_eps", m.logit_eps);

    TrainConfig& t = c.train.optim;
    rd("train", "learning_rate", t.learning_rate);
    rd("train", "weight_decay", t.weight_decay);
    rd("train", "batch_size", t.batch_size);
    rd("train", "epochs", t.epochs);
    rd("train", "ema_decay", t.ema_decay);
    rd("train", "cond_dropout_prob", t.cond_dropout_prob);
    std::string schedule;
    rd("train", "schedule", schedule);
    try {
        t.schedule = parse_schedule_kind(schedule);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: train.schedule: ") + e.what());
    }
    rd("train", "checkpoint_every", c.train.checkpoint_every);
    rd("train", "resume", c.train.resume);
    rd("train", "stop_after_epochs", c.train.stop_after_epochs);
    t.num_train_steps = m.num_train_steps;
    t.logit_eps = m.logit_eps;

    SamplerConfig& sp = c.sample.sampler;
    rd("sample", "num_steps", sp.num_steps);
    rd("sample", "eta", sp.eta);
    rd("sample", "cfg_weight", sp.cfg_weight);
    rd("sample", "sag_enabled", sp.sag_enabled);
    rd("sample", "sag_scale", sp.sag_scale);
    rd("sample", "sag_threshold", sp.sag_threshold);
    rd("sample", "sag_blur_sigma", sp.sag_blur_sigma);
    rd("sample", "num_samples", c.sample.num_samples);
    rd("sample", "summarize", c.sample.summarize);
    rd("sample", "rho", c.sample.rho);
    rd("sample", "use_ema", c.sample.use_ema);
    rd("sample", "workers", c.sample.workers);
    sp.logit_eps = m.logit_eps;

    rd("segment", "max_segments", c.segment.max_segments);
    rd("segment", "penalty", c.segment.penalty);
    rd("evaluate", "coverage_threshold", c.evaluate.coverage_threshold);
    rd("evaluate", "rho", c.evaluate.rho);
    rd("evaluate", "workers", c.evaluate.workers);

    MultiplicityConfig& k = c.kp_study;
    rd("kp_study", "num_items", k.num_items);
    rd("kp_study", "bins", k.bins);
    rd("kp_study", "trials", k.trials);
    rd("kp_study", "rho", k.rho);
    rd("kp_study", "min_weight", k.min_weight);
    rd("kp_study", "max_weight", k.max_weight);
    rd("kp_study", "perturbation_scale", k.perturbation_scale);
    rd("kp_study", "quantize", k.quantize);
    rd("kp_study", "enumeration_limit", k.enumeration_limit);
    rd("kp_study", "workers", k.workers);

    s.seed = derive_seed(c.seed, "synth");
    t.seed = derive_seed(c.seed, "train");
    sp.seed = derive_seed(c.seed, "sample");
    k.seed = derive_seed(c.seed, "kp-study");
    return c;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    const json flat = run_config_to_json(RunConfig{}).flatten();
    for (const auto& [pointer, value] : flat.items()) {
        std::string k = pointer.substr(1);
        std::replace(k.begin(), k.end(), '/', '.');
        // Array elements flatten to "a.b.0"; expose the array itself.
        const auto dot = k.find_last_of('.');
        if (dot != std::string::npos && std::all_of(k.begin() + static_cast<std::ptrdiff_t>(dot) + 1, k.end(), ::isdigit))
            k.resize(dot);
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    return keys;
}

void apply_override(json& doc, const std::string& dotted_key, const std::string& value) {
    json* node = &doc;
    std::stringstream ss(dotted_key);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->is_object() || !node->contains(part)) throw ConfigError("config: unknown key '" + dotted_key + "'");
        node = &(*node)[part];
    }
    if (node->is_object()) throw ConfigError("config: '" + dotted_key + "' is a section, not a value");
    try {
        std::size_t used = 0;
        if (node->is_boolean()) {
            if (value == "true" || value == "1") {
                *node = true;
            } else if (value == "false" || value == "0") {
                *node = false;
            } else {
                throw ConfigError("config: '" + dotted_key + "' expects true or false, got '" + value + "'");
            }
            return;
        }
        if (node->is_number_unsigned() || node->is_number_integer()) {
            if (!value.empty() && value[0] == '-') throw ConfigError("config: '" + dotted_key + "' must be non-negative");
            const unsigned long long v = std::stoull(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
            *node = v;
            return;
        }
        if (node->is_number_float()) {
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
            *node = v;
            return;
        }
        if (node->is_array()) {
            json parsed = json::parse(value.front() == '[' ? value : "[" + value + "]");
            *node = std::move(parsed);
            return;
        }
        *node = value;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("config: cannot parse '" + value + "' for '" + dotted_key + "'");
    }
}

RunConfig resolve_run_config(const ConfigSources& sources) {
    json doc = run_config_to_json(RunConfig{});
    if (sources.config_file) {
        std::ifstream in(*sources.config_file);
        if (!in) throw ConfigError("cannot open config file " + sources.config_file->string());
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("malformed config file " + sources.config_file->string() + ": " + e.what());
        }
        check_known_keys(file, doc, "");
        doc.merge_patch(file);
    }
    for (const auto& [key, value] : sources.overrides) apply_override(doc, key, value);
    if (sources.seed) doc["seed"] = *sources.seed;
    if (sources.out_dir) doc["out_dir"] = sources.out_dir->string();
    return run_config_from_json(doc);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    for (char ch : tag) h = mix(h ^ static_cast<unsigned char>(ch));
    return mix(h ^ mix(index));
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

fs::path ema_path(const fs::path& checkpoint) {
    fs::path p = checkpoint;
    p.replace_filename(checkpoint.stem().string() + "_ema" + checkpoint.extension().string());
    return p;
}

}  // namespace

ScoreVector mean_vector(const std::vector<ScoreVector>& rows) {
    if (rows.empty()) throw ContractError("mean_vector: no rows");
    ScoreVector m(rows[0].size(), 0.0);
    for (const auto& r : rows) {
        if (r.size() != m.size()) throw DimensionError("mean_vector: ragged rows");
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += r[i];
    }
    for (double& x : m) x /= static_cast<double>(rows.size());
    return m;
}

SegmentList segment_video(const FeatureMatrix& features, const SegmentCommandConfig& cfg) {
    const std::size_t bound = std::min(cfg.max_segments, features.rows - 1);
    if (bound == 0) return uniform_segments(features.rows, features.rows);
    return kts_segment(features, bound, cfg.penalty);
}

std::vector<ScoreVector> sample_video(const Denoiser& model, const NoiseSchedule& schedule, const VideoRecord& video,
                                      const SamplerConfig& sampler, std::size_t num_samples, std::uint64_t seed) {
    const ConditionedDenoiser cond(model, video.features);
    std::mt19937_64 rng(seed);
    std::vector<ScoreVector> out;
    out.reserve(num_samples);
    for (std::size_t k = 0; k < num_samples; ++k) out.push_back(sample(cond, schedule, sampler, rng));
    return out;
}

void save_samples(const fs::path& path, const std::vector<VideoSamples>& videos) {
    json arr = json::array();
    for (const auto& v : videos) {
        json jv{{"id", v.id}, {"samples", v.samples}};
        if (!v.summaries.empty()) {
            jv["summaries"] = v.summaries;
            jv["segments"] = {{"boundaries", v.segments.boundaries}};
        }
        arr.push_back(std::move(jv));
    }
    write_text(path, json{{"version", 1}, {"videos", arr}}.dump(1) + "\n");
}

std::vector<VideoSamples> load_samples(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<VideoSamples> out;
    try {
        const json doc = json::parse(in);
        for (const auto& jv : doc.at("videos")) {
            VideoSamples v;
            v.id = jv.at("id").get<std::string>();
            v.samples = jv.at("samples").get<std::vector<ScoreVector>>();
            if (jv.contains("summaries")) {
                v.summaries = jv["summaries"].get<std::vector<std::vector<std::uint8_t>>>();
                v.segments.boundaries = jv.at("segments").at("boundaries").get<std::vector<std::size_t>>();
            }
            if (v.samples.empty()) throw ValidationError(path.string() + ": video '" + v.id + "' has no samples");
            out.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed samples file " + path.string() + ": " + e.what());
    }
    return out;
}

VideoMetrics evaluate_video(const VideoRecord& video, const std::vector<ScoreVector>& samples, const SegmentCommandConfig& seg,
                            double rho) {
    validate(video);
    const ScoreVector pred = mean_vector(samples);
    const ScoreVector gt = mean_vector(video.annotations);
    if (pred.size() != gt.size())
        throw DimensionError("evaluate: video '" + video.id + "' samples have length " + std::to_string(pred.size()) + ", expected " +
                             std::to_string(gt.size()));
    VideoMetrics m;
    auto optional_metric = [](auto fn) -> std::optional<double> {
        try {
            return fn();
        } catch (const ContractError&) {
            return std::nullopt;  // undefined for this input (constant vector, too few shots)
        }
    };
    m.tau = optional_metric([&] { return kendall_tau(pred, gt); });
    m.rho = optional_metric([&] { return spearman_rho(pred, gt); });
    m.map50 = optional_metric([&] { return map_at_rho(pred, gt, video.fps, 0.5); });
    m.map15 = optional_metric([&] { return map_at_rho(pred, gt, video.fps, 0.15); });

    m.segments = segment_video(video.features, seg);
    KPInstance truth;
    truth.values = clip_values(gt, m.segments);
    for (std::size_t w : m.segments.weights()) truth.weights.push_back(w);
    truth.capacity = budget_capacity(rho, gt.size());
    const SensitivityContext ctx = make_sensitivity_context(truth, clip_values(pred, m.segments));
    m.cis = cis(ctx);
    m.wir = wir(ctx, inclusion_intervals(ctx));
    m.wse = wse(ctx);
    m.f1 = f1_summary(generate_summary(pred, m.segments, rho).frames, generate_summary(gt, m.segments, rho).frames);
    return m;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
    cfg.synth.data.validate();
    SynthDataset data = synth_generate(cfg.synth.data);
    std::optional<AnnotatorSplit> split;
    if (cfg.synth.holdout_per_mode > 0) split = hold_out_annotators(data, cfg.synth.holdout_per_mode);
    ensure_out_dir(cfg.out_dir);
    if (split) {
        save_dataset(cfg.dataset_path(), split->train);
        save_mode_table(cfg.modes_path(), split->train_modes);
        save_dataset(cfg.out_dir / "heldout.json", split->heldout);
        save_mode_table(cfg.out_dir / "heldout_modes.json", split->heldout_modes);
        log << "wrote " << (cfg.out_dir / "heldout.json").string() << " and " << (cfg.out_dir / "heldout_modes.json").string() << '\n';
    } else {
        save_dataset(cfg.dataset_path(), data.videos);
        save_mode_table(cfg.modes_path(), data.modes);
    }
    log << "wrote " << cfg.dataset_path().string() << " (" << data.videos.size() << " videos) and " << cfg.modes_path().string() << '\n';
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
    require_file(cfg.dataset_path(), "dataset");
    cfg.train.optim.validate();
    const std::vector<VideoRecord> dataset = load_dataset(cfg.dataset_path());
    if (dataset.empty()) throw ConfigError("dataset " + cfg.dataset_path().string() + " has no videos");
    DenoiserConfig model_cfg = cfg.model;
    const std::size_t dim = dataset.front().features.cols;
    if (model_cfg.input_dim == 0) model_cfg.input_dim = dim;
    if (model_cfg.input_dim != dim)
        throw ConfigError("model.input_dim is " + std::to_string(model_cfg.input_dim) + " but the dataset has " + std::to_string(dim) +
                          "-dimensional features");
    model_cfg.validate();

    const fs::path state_dir = cfg.out_dir / "train_state";
    const bool resuming = cfg.train.resume && fs::exists(state_dir / "state.json");
    ensure_out_dir(cfg.out_dir);

    Trainer trainer(dataset, Denoiser(model_cfg, derive_seed(cfg.seed, "init")), cfg.train.optim);
    if (resuming) {
        trainer.load_state(state_dir);
        log << "resumed at epoch " << trainer.epochs_done() << '\n';
    }
    std::size_t ran = 0;
    while (trainer.epochs_done() < cfg.train.optim.epochs && (cfg.train.stop_after_epochs == 0 || ran < cfg.train.stop_after_epochs)) {
        const double loss = trainer.run_epochs(1).front();
        ++ran;
        log << "epoch " << trainer.epochs_done() << " loss " << loss << '\n';
        if (cfg.train.checkpoint_every > 0 && trainer.epochs_done() % cfg.train.checkpoint_every == 0) trainer.save_state(state_dir);
    }
    trainer.save_state(state_dir);
    save_checkpoint(cfg.checkpoint_path(), trainer.model(), cfg.train.optim);
    save_checkpoint(ema_path(cfg.checkpoint_path()), trainer.ema_model(), cfg.train.optim);

    std::ostringstream csv;
    csv << "epoch,loss\n" << std::setprecision(12);
    const auto& losses = trainer.log().epoch_loss;
    for (std::size_t e = 0; e < losses.size(); ++e) csv << e + 1 << ',' << losses[e] << '\n';
    write_text(cfg.out_dir / "train_log.csv", csv.str());
    log << "wrote " << cfg.checkpoint_path().string() << ", " << ema_path(cfg.checkpoint_path()).string() << " and " << (cfg.out_dir / "train_log.csv").string()
        << '\n';
}

void cmd_sample(const RunConfig& cfg, std::ostream& log) {
    const fs::path ckpt = cfg.sample.use_ema ? ema_path(cfg.checkpoint_path()) : cfg.checkpoint_path();
    require_file(ckpt, "checkpoint");
    require_file(cfg.dataset_path(), "dataset");
    if (cfg.sample.num_samples == 0) throw ConfigError("sample.num_samples must be positive");
    if (cfg.sample.workers == 0) throw ConfigError("sample.workers must be positive");
    if (cfg.sample.summarize && !(cfg.sample.rho > 0.0 && cfg.sample.rho <= 1.0)) throw ConfigError("sample.rho must lie in (0, 1]");
    const TrainConfig trained = load_checkpoint_train_config(ckpt);
    const NoiseSchedule schedule = make_schedule(trained.schedule, trained.num_train_steps);
    SamplerConfig sampler = cfg.sample.sampler;
    const Denoiser model = Denoiser::load(ckpt);
    sampler.logit_eps = model.config().logit_eps;
    try {
        sampler.validate(schedule);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const std::vector<VideoRecord> dataset = load_dataset(cfg.dataset_path());

    std::vector<VideoSamples> out(dataset.size());
    parallel_for(dataset.size(), cfg.sample.workers, [&](std::size_t v) {
        VideoSamples& vs = out[v];
        vs.id = dataset[v].id;
        vs.samples = sample_video(model, schedule, dataset[v], sampler, cfg.sample.num_samples, derive_seed(sampler.seed, "video", v));
        if (cfg.sample.summarize) {
            vs.segments = segment_video(dataset[v].features, cfg.segment);
            for (const auto& s : vs.samples) vs.summaries.push_back(generate_summary(s, vs.segments, cfg.sample.rho).frames);
        }
    });
    ensure_out_dir(cfg.out_dir);
    save_samples(cfg.samples_path(), out);
    log << "wrote " << cfg.samples_path().string() << " (" << dataset.size() << " videos x " << cfg.sample.num_samples << " samples)\n";
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    require_file(cfg.dataset_path(), "dataset");
    require_file(cfg.samples_path(), "samples");
    require_file(cfg.coverage_dataset_path(), "coverage dataset");
    if (!(cfg.evaluate.rho > 0.0 && cfg.evaluate.rho <= 1.0)) throw ConfigError("evaluate.rho must lie in (0, 1]");
    if (cfg.evaluate.workers == 0) throw ConfigError("evaluate.workers must be positive");
    const std::vector<VideoRecord> dataset = load_dataset(cfg.dataset_path());
    const std::vector<VideoRecord> coverage_set =
        cfg.coverage_dataset_path() == cfg.dataset_path() ? dataset : load_dataset(cfg.coverage_dataset_path());
    const std::vector<VideoSamples> samples = load_samples(cfg.samples_path());

    std::map<std::string, const VideoSamples*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::map<std::string, const VideoRecord*> coverage_by_id;
    for (const auto& v : coverage_set) coverage_by_id[v.id] = &v;
    for (const auto& v : dataset) {
        if (!by_id.count(v.id)) throw ValidationError("samples file has no entry for video '" + v.id + "'");
        if (!coverage_by_id.count(v.id)) throw ValidationError("coverage dataset has no entry for video '" + v.id + "'");
    }

    const std::size_t n = dataset.size();
    std::vector<VideoMetrics> metrics(n);
    std::vector<std::vector<double>> coverage(n);
    std::vector<std::vector<std::vector<double>>> annotation_xy(n), generated_xy(n);
    parallel_for(n, cfg.evaluate.workers, [&](std::size_t v) {
        const VideoRecord& video = dataset[v];
        const VideoSamples& gen = *by_id.at(video.id);
        const VideoRecord& cov = *coverage_by_id.at(video.id);
        metrics[v] = evaluate_video(video, gen.samples, cfg.segment, cfg.evaluate.rho);
        coverage[v] = annotator_coverage(gen.samples, cov.annotations, cfg.evaluate.coverage_threshold);
        // The projection axes come from annotated summaries only.
        std::vector<ScoreVector> annotated = video.annotations;
        if (&cov != &video && cfg.coverage_dataset_path() != cfg.dataset_path())
            annotated.insert(annotated.end(), cov.annotations.begin(), cov.annotations.end());
        const PrincipalComponents pc = fit_principal_components(annotated, std::min<std::size_t>(2, annotated[0].size()));
        for (const auto& a : annotated) annotation_xy[v].push_back(pc.project(a));
        for (const auto& g : gen.samples) generated_xy[v].push_back(pc.project(g));
    });

    json per_video = json::object();
    std::map<std::string, std::vector<double>> columns;
    for (std::size_t v = 0; v < n; ++v) {
        const VideoMetrics& m = metrics[v];
        per_video[dataset[v].id] = {{"tau", optional_json(m.tau)},
                                    {"rho", optional_json(m.rho)},
                                    {"map50", optional_json(m.map50)},
                                    {"map15", optional_json(m.map15)},
                                    {"f1", m.f1},
                                    {"cis", m.cis},
                                    {"wir", m.wir},
                                    {"wse", m.wse},
                                    {"num_samples", by_id.at(dataset[v].id)->samples.size()},
                                    {"segments", {{"boundaries", m.segments.boundaries}}}};
        const std::pair<const char*, std::optional<double>> values[] = {
            {"tau", m.tau}, {"rho", m.rho}, {"map50", m.map50}, {"map15", m.map15}, {"f1", m.f1},
            {"cis", m.cis}, {"wir", m.wir}, {"wse", m.wse}};
        for (const auto& [name, value] : values)
            if (value) columns[name].push_back(*value);
            else columns[name];
    }
    json aggregate = json::object();
    for (const auto& [name, col] : columns) {
        json entry{{"count", col.size()}, {"mean", nullptr}, {"std", nullptr}};
        if (!col.empty()) {
            double mean = 0.0;
            for (double x : col) mean += x;
            mean /= static_cast<double>(col.size());
            double var = 0.0;
            for (double x : col) var += (x - mean) * (x - mean);
            entry["mean"] = mean;
            entry["std"] = col.size() > 1 ? std::sqrt(var / static_cast<double>(col.size() - 1)) : 0.0;
        }
        aggregate[name] = entry;
    }
    ensure_out_dir(cfg.out_dir);
    const json report{{"version", 1},
                      {"rho", cfg.evaluate.rho},
                      {"coverage_threshold", cfg.evaluate.coverage_threshold},
                      {"per_video", per_video},
                      {"aggregate", aggregate}};
    write_text(cfg.out_dir / "report.json", report.dump(1) + "\n");

    std::size_t max_annotators = 0;
    for (const auto& row : coverage) max_annotators = std::max(max_annotators, row.size());
    std::ostringstream cov_csv;
    cov_csv << "video";
    for (std::size_t r = 0; r < max_annotators; ++r) cov_csv << ",annotator_" << r;
    cov_csv << '\n' << std::setprecision(12);
    for (std::size_t v = 0; v < n; ++v) {
        cov_csv << dataset[v].id;
        for (std::size_t r = 0; r < max_annotators; ++r) {
            cov_csv << ',';
            if (r < coverage[v].size()) cov_csv << coverage[v][r];
        }
        cov_csv << '\n';
    }
    write_text(cfg.out_dir / "coverage.csv", cov_csv.str());

    std::ostringstream proj_csv;
    proj_csv << "video,source,index,pc1,pc2\n" << std::setprecision(12);
    auto emit = [&](const std::string& id, const char* source, const std::vector<std::vector<double>>& xy) {
        for (std::size_t i = 0; i < xy.size(); ++i)
            proj_csv << id << ',' << source << ',' << i << ',' << xy[i][0] << ',' << (xy[i].size() > 1 ? xy[i][1] : 0.0) << '\n';
    };
    for (std::size_t v = 0; v < n; ++v) {
        emit(dataset[v].id, "annotation", annotation_xy[v]);
        emit(dataset[v].id, "generated", generated_xy[v]);
    }
    write_text(cfg.out_dir / "projection.csv", proj_csv.str());

    log << "wrote " << (cfg.out_dir / "report.json").string() << ", " << (cfg.out_dir / "coverage.csv").string() << " and " << (cfg.out_dir / "projection.csv").string()
        << '\n';
    for (const auto& [name, entry] : aggregate.items())
        if (!entry["mean"].is_null()) log << "  " << name << " = " << entry["mean"].get<double>() << " +- " << entry["std"].get<double>() << '\n';
}

void cmd_kp_study(const RunConfig& cfg, std::ostream& log) {
    cfg.kp_study.validate();
    const std::vector<MultiplicityRow> rows = kp_multiplicity_study(cfg.kp_study);
    std::ostringstream csv;
    write_multiplicity_csv(csv, rows);
    ensure_out_dir(cfg.out_dir);
    write_text(cfg.out_dir / "kp_study.csv", csv.str());
    log << csv.str() << "wrote " << (cfg.out_dir / "kp_study.csv").string() << '\n';
}

}  // namespace scorediff
