// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "scorediff/error.hpp"

namespace scorediff {

using nlohmann::json;

void validate(const VideoRecord& v) {
    const std::string where = "video '" + v.id + "': ";
    const std::size_t n = v.features.rows;
    if (n < 2) throw ValidationError(where + "features must have at least 2 frames");
    if (v.features.cols < 1) throw ValidationError(where + "features must have at least 1 dimension");
    if (v.features.values.size() != n * v.features.cols) throw ValidationError(where + "features are ragged");
    for (double x : v.features.values)
        if (!std::isfinite(x)) throw ValidationError(where + "features contain a non-finite value");
    if (!(v.fps > 0.0) || !std::isfinite(v.fps)) throw ValidationError(where + "fps must be positive");
    if (v.annotations.empty()) throw ValidationError(where + "annotations must not be empty");
    for (std::size_t r = 0; r < v.annotations.size(); ++r) {
        const auto& a = v.annotations[r];
        if (a.size() != n)
            throw ValidationError(where + "annotations[" + std::to_string(r) + "] has length " + std::to_string(a.size()) +
                                  ", expected " + std::to_string(n));
        for (double x : a)
            if (!(x >= 0.0 && x <= 1.0))
                throw ValidationError(where + "annotations[" + std::to_string(r) + "] has value " + std::to_string(x) +
                                      " outside [0,1]");
    }
}

namespace {

FeatureMatrix features_from_json(const json& rows, const std::string& id) {
    if (!rows.is_array() || rows.empty()) throw ValidationError("video '" + id + "': features must be a non-empty array");
    FeatureMatrix m;
    m.rows = rows.size();
    m.cols = rows[0].size();
    m.values.reserve(m.rows * m.cols);
    for (const auto& row : rows) {
        if (!row.is_array() || row.size() != m.cols) throw ValidationError("video '" + id + "': features are ragged");
        for (const auto& x : row) m.values.push_back(x.get<double>());
    }
    return m;
}

json features_to_json(const FeatureMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows; ++r)
        rows.push_back(std::vector<double>(m.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                                           m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)));
    return rows;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

}  // namespace

std::vector<VideoRecord> load_dataset(const std::filesystem::path& path) {
    const json doc = read_json_file(path);
    if (!doc.is_object() || doc.value("version", 0) != 1 || !doc.contains("videos") || !doc["videos"].is_array())
        throw ValidationError(path.string() + ": expected {\"version\": 1, \"videos\": [...]}");
    std::vector<VideoRecord> videos;
    for (const auto& jv : doc["videos"]) {
        VideoRecord v;
        try {
            v.id = jv.at("id").get<std::string>();
            v.fps = jv.at("fps").get<double>();
            v.features = features_from_json(jv.at("features"), v.id);
            v.annotations = jv.at("annotations").get<std::vector<ScoreVector>>();
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ": video '" + v.id + "': " + e.what());
        }
        validate(v);
        videos.push_back(std::move(v));
    }
    return videos;
}

void save_dataset(const std::filesystem::path& path, const std::vector<VideoRecord>& videos) {
    json arr = json::array();
    for (const auto& v : videos) {
        arr.push_back({{"id", v.id}, {"fps", v.fps}, {"features", features_to_json(v.features)}, {"annotations", v.annotations}});
    }
    write_json_file(path, {{"version", 1}, {"videos", arr}});
}

void SynthConfig::validate() const {
    if (num_videos == 0) throw ConfigError("synth: num_videos must be positive");
    if (frames_per_video < 2) throw ConfigError("synth: frames_per_video must be at least 2");
    if (num_annotators == 0) throw ConfigError("synth: num_annotators must be positive");
    if (num_modes == 0) throw ConfigError("synth: num_modes must be positive");
    if (num_modes > num_annotators) throw ConfigError("synth: num_modes must not exceed num_annotators");
    if (2 * std::max<std::size_t>(num_modes, 2) > frames_per_video) throw ConfigError("synth: frames_per_video too small for num_modes regions");
    if (feature_dim < num_modes) throw ConfigError("synth: feature_dim must be at least num_modes");
    if (!(mode_noise >= 0.0) || !(feature_noise >= 0.0)) throw ConfigError("synth: noise levels must be non-negative");
    if (!(fps > 0.0)) throw ConfigError("synth: fps must be positive");
}

SynthDataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    constexpr double kLow = 0.1, kHigh = 0.9, kEdgeWidth = 0.7, kShotScale = 0.5;
    constexpr std::size_t kShotMin = 3, kShotMax = 8;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = cfg.frames_per_video, m = cfg.num_modes;
    // A single mode still gets a bump: it occupies one of two regions.
    const std::size_t regions = std::max<std::size_t>(m, 2);

    SynthDataset out;
    for (std::size_t vi = 0; vi < cfg.num_videos; ++vi) {
        // Region cut points: each region gets at least half its fair share.
        const std::size_t min_len = std::max<std::size_t>(1, n / (2 * regions));
        const std::size_t slack = n - min_len * regions;
        std::vector<double> u(regions);
        for (double& x : u) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const double total = std::accumulate(u.begin(), u.end(), 0.0);
        std::vector<std::size_t> cuts{0};
        std::size_t pos = 0;
        for (std::size_t k = 0; k + 1 < regions; ++k) {
            pos += min_len + static_cast<std::size_t>(std::floor(u[k] / total * static_cast<double>(slack)));
            cuts.push_back(pos);
        }
        cuts.push_back(n);
        std::vector<std::size_t> region_of_mode(regions);
        std::iota(region_of_mode.begin(), region_of_mode.end(), 0);
        std::shuffle(region_of_mode.begin(), region_of_mode.end(), rng);
        region_of_mode.resize(m);

        ModeTable table;
        table.video_id = "video_" + std::to_string(vi);
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t region = region_of_mode[k];
            const double lo = static_cast<double>(cuts[region]), hi = static_cast<double>(cuts[region + 1]);
            ScoreVector tmpl(n);
            for (std::size_t f = 0; f < n; ++f) {
                const double x = static_cast<double>(f);
                // Logistic edges; the outer video boundaries stay flat.
                const double rise = region == 0 ? 1.0 : 1.0 / (1.0 + std::exp(-(x - lo + 0.5) / kEdgeWidth));
                const double fall = region + 1 == regions ? 1.0 : 1.0 / (1.0 + std::exp((x - hi + 0.5) / kEdgeWidth));
                tmpl[f] = kLow + (kHigh - kLow) * rise * fall;
            }
            table.templates.push_back(std::move(tmpl));
        }

        table.annotator_mode.resize(cfg.num_annotators);
        for (std::size_t r = 0; r < cfg.num_annotators; ++r) table.annotator_mode[r] = r % m;
        std::shuffle(table.annotator_mode.begin(), table.annotator_mode.end(), rng);

        VideoRecord video;
        video.id = table.video_id;
        video.fps = cfg.fps;
        // Shot structure on the channels that carry no template: piecewise
        // constant offsets over runs of kShotMin..kShotMax frames.
        std::vector<double> shot_offset(n * cfg.feature_dim, 0.0);
        std::uniform_int_distribution<std::size_t> shot_len(kShotMin, kShotMax);
        for (std::size_t start = 0; start < n;) {
            const std::size_t end = std::min(n, start + shot_len(rng));
            for (std::size_t d = m; d < cfg.feature_dim; ++d) {
                const double offset = kShotScale * normal(rng);
                for (std::size_t f = start; f < end; ++f) shot_offset[f * cfg.feature_dim + d] = offset;
            }
            start = end;
        }
        video.features = FeatureMatrix(n, cfg.feature_dim);
        for (std::size_t f = 0; f < n; ++f)
            for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
                const double base = d < m ? table.templates[d][f] : shot_offset[f * cfg.feature_dim + d];
                video.features(f, d) = base + cfg.feature_noise * normal(rng);
            }
        for (std::size_t r = 0; r < cfg.num_annotators; ++r) {
            const auto& tmpl = table.templates[table.annotator_mode[r]];
            ScoreVector a(n);
            for (std::size_t f = 0; f < n; ++f) a[f] = std::clamp(tmpl[f] + cfg.mode_noise * normal(rng), 0.0, 1.0);
            video.annotations.push_back(std::move(a));
        }
        out.videos.push_back(std::move(video));
        out.modes.push_back(std::move(table));
    }
    return out;
}

AnnotatorSplit hold_out_annotators(const SynthDataset& data, std::size_t per_mode) {
    if (data.videos.size() != data.modes.size()) throw ContractError("hold_out_annotators: one mode table per video required");
    AnnotatorSplit out;
    for (std::size_t v = 0; v < data.videos.size(); ++v) {
        const VideoRecord& video = data.videos[v];
        const ModeTable& table = data.modes[v];
        VideoRecord train = video, held = video;
        train.annotations.clear();
        held.annotations.clear();
        ModeTable train_modes{table.video_id, {}, table.templates}, held_modes{table.video_id, {}, table.templates};
        std::vector<std::size_t> taken(table.templates.size(), 0), total(table.templates.size(), 0);
        for (std::size_t m : table.annotator_mode) ++total.at(m);
        for (std::size_t r = 0; r < video.annotations.size(); ++r) {
            const std::size_t m = table.annotator_mode.at(r);
            if (taken[m] < per_mode) {
                ++taken[m];
                held.annotations.push_back(video.annotations[r]);
                held_modes.annotator_mode.push_back(m);
            } else {
                train.annotations.push_back(video.annotations[r]);
                train_modes.annotator_mode.push_back(m);
            }
        }
        for (std::size_t m = 0; m < total.size(); ++m)
            if (total[m] <= per_mode)
                throw ConfigError("hold_out_annotators: video '" + video.id + "' mode " + std::to_string(m) +
                                  " would keep no training annotator");
        out.train.push_back(std::move(train));
        out.heldout.push_back(std::move(held));
        out.train_modes.push_back(std::move(train_modes));
        out.heldout_modes.push_back(std::move(held_modes));
    }
    return out;
}

void save_mode_table(const std::filesystem::path& path, const std::vector<ModeTable>& modes) {
    json arr = json::array();
    for (const auto& t : modes)
        arr.push_back({{"id", t.video_id}, {"annotator_mode", t.annotator_mode}, {"templates", t.templates}});
    write_json_file(path, {{"version", 1}, {"videos", arr}});
}

std::vector<ModeTable> load_mode_table(const std::filesystem::path& path) {
    const json doc = read_json_file(path);
    std::vector<ModeTable> out;
    try {
        for (const auto& jt : doc.at("videos")) {
            ModeTable t;
            t.video_id = jt.at("id").get<std::string>();
            t.annotator_mode = jt.at("annotator_mode").get<std::vector<std::size_t>>();
            t.templates = jt.at("templates").get<std::vector<ScoreVector>>();
            out.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return out;
}

ScoreVector logit_clip(const ScoreVector& s, double eps) {
    if (!(eps > 0.0 && eps < 0.5)) throw ContractError("logit_clip: eps must lie in (0, 0.5)");
    ScoreVector out(s.size());
    std::transform(s.begin(), s.end(), out.begin(), [eps](double x) { return std::clamp(x, eps, 1.0 - eps); });
    return out;
}

}  // namespace scorediff
