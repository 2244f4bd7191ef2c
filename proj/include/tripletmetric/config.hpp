#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "tripletmetric/error.hpp"
#include "tripletmetric/simulate.hpp"
#include "tripletmetric/types.hpp"

namespace tripletmetric {

/// Where a run's feature matrix comes from.
struct DataConfig {
    enum class Source { Synthetic, Csv };

    Source source = Source::Synthetic;

    // synthetic source
    FeatureKind kind = FeatureKind::GaussianDiagonal;
    double chi = 1.0;
    double rho = 0.8;
    Index n = 120;
    Index p = 20;

    // csv source
    std::string path;
    bool has_header = false;
    std::optional<Index> pca_components;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Full description of one experiment run. Serializes to a canonical JSON
/// document; parsing rejects unknown keys.
struct RunConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    Index r = 3;
    double s = 0.5;
    double eta = 0.1;
    Index iterations = 200;
    Index record_every = 1;
    double discard_fraction = 0.1;
    double pi_floor = 1e-12;
    bool symmetrize = false;
    Index threads = 1;  ///< 0 selects the machine's hardware concurrency
    std::string out_dir = "run-output";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    void validate() const {
        if (r < 1) throw ConfigError("rank must be at least 1");
        if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("sampling rate must lie in [0, 1]");
        if (!(eta > 0.0)) throw ConfigError("step size must be positive");
        if (iterations < 1) throw ConfigError("iteration count must be at least 1");
        if (record_every < 1) throw ConfigError("record stride must be at least 1");
        if (!(discard_fraction >= 0.0 && discard_fraction < 1.0))
            throw ConfigError("discard fraction must lie in [0, 1)");
        if (!(pi_floor > 0.0)) throw ConfigError("score floor must be positive");
        if (threads < 0) throw ConfigError("thread count must be nonnegative");
        if (out_dir.empty()) throw ConfigError("output directory must not be empty");
        if (data.source == DataConfig::Source::Synthetic) {
            FeatureDistribution dist;
            dist.kind = data.kind;
            dist.p = data.p;
            dist.chi = data.chi;
            dist.rho = data.rho;
            dist.validate();
            if (data.n < 3) throw ConfigError("need at least 3 individuals");
        } else {
            if (data.path.empty()) throw ConfigError("csv source needs a path");
            if (data.pca_components.has_value() && *data.pca_components < 1)
                throw ConfigError("pca component count must be positive");
        }
    }
};

namespace detail {

class StrictObject {
public:
    StrictObject(const nlohmann::json& j, const std::string& where) : json_(j), where_(where) {
        if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    }

    template <typename T>
    T require(const std::string& key) {
        if (!json_.contains(key)) throw ConfigError(where_ + " is missing key '" + key + "'");
        consumed_.insert(key);
        return get<T>(key);
    }

    template <typename T>
    T optional(const std::string& key, T fallback) {
        if (!json_.contains(key)) return fallback;
        consumed_.insert(key);
        return get<T>(key);
    }

    bool contains(const std::string& key) const { return json_.contains(key); }

    void mark(const std::string& key) { consumed_.insert(key); }

    void finish() const {
        for (const auto& item : json_.items())
            if (!consumed_.contains(item.key()))
                throw ConfigError(where_ + " has unknown key '" + item.key() + "'");
    }

private:
    template <typename T>
    T get(const std::string& key) {
        try {
            return json_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + " key '" + key + "' has the wrong type: " + e.what());
        }
    }

    const nlohmann::json& json_;
    std::string where_;
    std::set<std::string> consumed_;
};

} // namespace detail

inline nlohmann::json to_json(const DataConfig& data) {
    nlohmann::json j;
    if (data.source == DataConfig::Source::Synthetic) {
        j["type"] = "synthetic";
        j["dist"] = to_string(data.kind);
        if (data.kind == FeatureKind::GaussianAr)
            j["rho"] = data.rho;
        else
            j["chi"] = data.chi;
        j["n"] = data.n;
        j["p"] = data.p;
    } else {
        j["type"] = "csv";
        j["path"] = data.path;
        j["has_header"] = data.has_header;
        if (data.pca_components.has_value()) j["pca_components"] = *data.pca_components;
    }
    return j;
}

inline DataConfig data_config_from_json(const nlohmann::json& j) {
    detail::StrictObject obj(j, "data");
    DataConfig data;
    const std::string type = obj.require<std::string>("type");
    if (type == "synthetic") {
        data.source = DataConfig::Source::Synthetic;
        data.kind = feature_kind_from_string(obj.require<std::string>("dist"));
        if (data.kind == FeatureKind::GaussianAr) {
            data.rho = obj.require<double>("rho");
        } else {
            data.chi = obj.require<double>("chi");
        }
        data.n = obj.require<Index>("n");
        data.p = obj.require<Index>("p");
    } else if (type == "csv") {
        data.source = DataConfig::Source::Csv;
        data.path = obj.require<std::string>("path");
        data.has_header = obj.optional<bool>("has_header", false);
        if (obj.contains("pca_components"))
            data.pca_components = obj.optional<Index>("pca_components", 0);
    } else {
        throw ConfigError("data type must be 'synthetic' or 'csv', got '" + type + "'");
    }
    obj.finish();
    return data;
}

inline nlohmann::json to_json(const RunConfig& config) {
    nlohmann::json j;
    j["seed"] = config.seed;
    j["data"] = to_json(config.data);
    j["r"] = config.r;
    j["s"] = config.s;
    j["eta"] = config.eta;
    j["iterations"] = config.iterations;
    j["record_every"] = config.record_every;
    j["discard_fraction"] = config.discard_fraction;
    j["pi_floor"] = config.pi_floor;
    j["symmetrize"] = config.symmetrize;
    j["threads"] = config.threads;
    j["out_dir"] = config.out_dir;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    detail::StrictObject obj(j, "config");
    RunConfig config;
    config.seed = obj.optional<std::uint64_t>("seed", config.seed);
    if (obj.contains("data")) {
        config.data = data_config_from_json(j.at("data"));
        obj.mark("data");
    }
    config.r = obj.optional<Index>("r", config.r);
    config.s = obj.optional<double>("s", config.s);
    config.eta = obj.optional<double>("eta", config.eta);
    config.iterations = obj.optional<Index>("iterations", config.iterations);
    config.record_every = obj.optional<Index>("record_every", config.record_every);
    config.discard_fraction = obj.optional<double>("discard_fraction", config.discard_fraction);
    config.pi_floor = obj.optional<double>("pi_floor", config.pi_floor);
    config.symmetrize = obj.optional<bool>("symmetrize", config.symmetrize);
    config.threads = obj.optional<Index>("threads", config.threads);
    config.out_dir = obj.optional<std::string>("out_dir", config.out_dir);
    obj.finish();
    config.validate();
    return config;
}

/// Parses a config from JSON text.
inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

} // namespace tripletmetric
