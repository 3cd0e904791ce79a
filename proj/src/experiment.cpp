#include "fedsim/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
        if (!object_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return object_.contains(key) && !object_.at(key).is_null();
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return object_.at(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool read(const std::string& key, int& out) {
        if (!has(key)) return false;
        const auto& v = object_.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < std::numeric_limits<int>::min() ||
            v.get<std::int64_t>() > std::numeric_limits<int>::max()) {
            throw ConfigError(field(key) + ": expected an integer");
        }
        out = v.get<int>();
        return true;
    }

    bool read(const std::string& key, std::uint64_t& out) {
        if (!has(key)) return false;
        const auto& v = object_.at(key);
        if (v.is_number_unsigned()) {
            out = v.get<std::uint64_t>();
        } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
            out = static_cast<std::uint64_t>(v.get<std::int64_t>());
        } else {
            throw ConfigError(field(key) + ": expected a non-negative integer");
        }
        return true;
    }

    bool read(const std::string& key, double& out) {
        if (!has(key)) return false;
        const auto& v = object_.at(key);
        if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
        out = v.get<double>();
        return true;
    }

    bool read(const std::string& key, bool& out) {
        if (!has(key)) return false;
        const auto& v = object_.at(key);
        if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
        out = v.get<bool>();
        return true;
    }

    bool read(const std::string& key, std::string& out) {
        if (!has(key)) return false;
        const auto& v = object_.at(key);
        if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
        out = v.get<std::string>();
        return true;
    }

    void require(const std::string& key) {
        if (!object_.contains(key)) throw ConfigError(field(key) + ": required field is missing");
    }

    void reject(const std::string& key, const std::string& why) {
        if (object_.contains(key)) throw ConfigError(field(key) + ": " + why);
    }

    void finish() const {
        for (const auto& [key, _] : object_.items()) {
            if (!seen_.contains(key)) throw ConfigError(field(key) + ": unknown key");
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

PoisonConfig parse_poison(const json& node, const std::string& path, bool& explicit_seed) {
    ObjectReader r(node, path);
    PoisonConfig p;
    std::string strategy;
    r.require("strategy");
    r.read("strategy", strategy);
    p.strategy = parse_poison_strategy(strategy);
    explicit_seed = r.read("rng_seed", p.rng_seed);

    const bool label = p.strategy == PoisonStrategy::random_label;
    const bool specific = p.strategy == PoisonStrategy::specific_label;
    const bool pixel = p.strategy == PoisonStrategy::random_pixel;
    const std::string foreign = "not a parameter of strategy '" + strategy + "'";
    if (label) {
        r.read("no_labels", p.no_labels);
    } else {
        r.reject("no_labels", foreign);
    }
    if (specific) {
        r.read("source_label", p.source_label);
        if (r.has("target_label")) {
            const auto& t = r.raw("target_label");
            if (t.is_string() && t.get<std::string>() == "random") {
                p.target_label.reset();
            } else if (t.is_number_integer()) {
                p.target_label = t.get<int>();
            } else {
                throw ConfigError(r.field("target_label") + ": expected an integer or \"random\"");
            }
        }
        r.read("part_of_labels", p.part_of_labels);
    } else {
        for (const char* k : {"source_label", "target_label", "part_of_labels"}) r.reject(k, foreign);
    }
    if (pixel) {
        r.read("perc_img", p.perc_img);
        r.read("nr_pixels", p.nr_pixels);
        r.read("pixel_threshold", p.pixel_threshold);
        r.read("pixel_group", p.pixel_group);
    } else {
        for (const char* k : {"perc_img", "nr_pixels", "pixel_threshold", "pixel_group"}) r.reject(k, foreign);
    }
    r.finish();
    return p;
}

DetectorConfig parse_detector(const json& node) {
    ObjectReader r(node, "detector");
    DetectorConfig d;
    std::string version;
    if (r.read("version", version)) d.version = parse_detector_version(version);
    r.read("average_scale", d.average_scale);
    r.read("label_scale", d.label_scale);
    if (r.has("threshold")) {
        ObjectReader t(r.raw("threshold"), "detector.threshold");
        t.read("round_offset", d.curve.round_offset);
        t.read("decay_exponent", d.curve.decay_exponent);
        t.read("log_coefficient", d.curve.log_coefficient);
        t.read("root_exponent", d.curve.root_exponent);
        t.read("gain", d.curve.gain);
        t.read("percent", d.curve.percent);
        t.finish();
    }
    r.finish();
    return d;
}

}  // namespace

std::set<int> ExperimentConfig::poisoned_ids() const {
    std::set<int> ids;
    for (const auto& p : poisoned_clients) {
        if (p.poison.strategy != PoisonStrategy::none) ids.insert(p.client_id);
    }
    return ids;
}

void ExperimentConfig::validate() const {
    if (!train_file) {
        dataset.validate();
    } else if (!test_file) {
        throw ConfigError("dataset.test_file: required when dataset.train_file is set");
    } else if (dataset.num_classes < 2) {
        throw ConfigError("dataset.num_classes must be >= 2");
    }
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    train.validate();
    if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (hidden_units < 0) throw ConfigError("train.hidden_units must be >= 0");
    std::set<int> seen;
    for (std::size_t i = 0; i < poisoned_clients.size(); ++i) {
        const auto& p = poisoned_clients[i];
        const std::string field = "poisoned_clients[" + std::to_string(i) + "].client_id";
        if (p.client_id < 0 || p.client_id >= num_clients) {
            throw ConfigError(field + ": " + std::to_string(p.client_id) + " is not below num_clients (" +
                              std::to_string(num_clients) + ")");
        }
        if (!seen.insert(p.client_id).second) {
            throw ConfigError(field + ": client " + std::to_string(p.client_id) + " listed twice");
        }
        try {
            p.poison.validate(dataset.num_classes, train_file ? 0 : dataset.feature_dim);
        } catch (const ConfigError& e) {
            throw ConfigError("poisoned_clients[" + std::to_string(i) + "]." + e.what());
        }
    }
    if (detector) detector->validate();
    blacklist.validate();
    if (workers < 1) throw ConfigError("workers must be >= 1");
}

ExperimentConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    ExperimentConfig cfg;
    ObjectReader r(root, "");
    r.require("dataset");
    r.require("master_seed");

    {
        ObjectReader d(r.raw("dataset"), "dataset");
        d.read("num_classes", cfg.dataset.num_classes);
        d.read("feature_dim", cfg.dataset.feature_dim);
        d.read("examples_per_client", cfg.dataset.examples_per_client);
        d.read("test_set_size", cfg.dataset.test_set_size);
        cfg.explicit_generator_seed = d.read("generator_seed", cfg.dataset.generator_seed);
        d.read("class_separation", cfg.dataset.class_separation);
        d.read("pixel_scale", cfg.dataset.pixel_scale);
        std::string file;
        if (d.read("train_file", file)) cfg.train_file = file;
        if (d.read("test_file", file)) cfg.test_file = file;
        d.finish();
    }
    r.read("num_clients", cfg.num_clients);
    r.read("rounds", cfg.rounds);
    if (r.has("train")) {
        ObjectReader t(r.raw("train"), "train");
        t.read("epochs", cfg.train.epochs);
        t.read("batch_size", cfg.train.batch_size);
        t.read("learning_rate", cfg.train.learning_rate);
        cfg.explicit_train_seed = t.read("rng_seed", cfg.train.rng_seed);
        t.read("hidden_units", cfg.hidden_units);
        t.finish();
    }
    if (r.has("poisoned_clients")) {
        const auto& list = r.raw("poisoned_clients");
        if (!list.is_array()) throw ConfigError("poisoned_clients: expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string path = "poisoned_clients[" + std::to_string(i) + "]";
            ObjectReader p(list[i], path);
            PoisonedClient pc;
            p.require("client_id");
            p.require("poison");
            p.read("client_id", pc.client_id);
            bool explicit_seed = false;
            pc.poison = parse_poison(p.raw("poison"), path + ".poison", explicit_seed);
            p.finish();
            cfg.poisoned_clients.push_back(pc);
            cfg.explicit_poison_seed.push_back(explicit_seed);
        }
    }
    if (root.contains("detector")) {
        const auto& det = r.raw("detector");
        if (det.is_null() || (det.is_boolean() && !det.get<bool>())) {
            cfg.detector.reset();
        } else {
            cfg.detector = parse_detector(det);
        }
    }
    if (r.has("blacklist")) {
        ObjectReader b(r.raw("blacklist"), "blacklist");
        b.read("enabled", cfg.blacklist.enabled);
        b.read("detections_required", cfg.blacklist.detections_required);
        b.read("window_rounds", cfg.blacklist.window_rounds);
        b.finish();
    }
    r.read("discard_on_arrival", cfg.discard_on_arrival);
    r.read("compare_to_baseline", cfg.compare_to_baseline);
    r.read("master_seed", cfg.master_seed);
    std::string out_dir;
    if (r.read("output_dir", out_dir)) cfg.output_dir = out_dir;
    r.read("workers", cfg.workers);
    r.finish();

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

ComponentSeeds derive_component_seeds(const ExperimentConfig& cfg) {
    return {derive_seed(cfg.master_seed, "dataset"), derive_seed(cfg.master_seed, "partition"),
            derive_seed(cfg.master_seed, "init"), derive_seed(cfg.master_seed, "train")};
}

ExperimentConfig resolve_seeds(ExperimentConfig cfg) {
    const auto seeds = derive_component_seeds(cfg);
    if (!cfg.explicit_generator_seed) cfg.dataset.generator_seed = seeds.generator;
    if (!cfg.explicit_train_seed) cfg.train.rng_seed = seeds.train;
    cfg.explicit_poison_seed.resize(cfg.poisoned_clients.size(), false);
    for (std::size_t i = 0; i < cfg.poisoned_clients.size(); ++i) {
        auto& pc = cfg.poisoned_clients[i];
        if (!cfg.explicit_poison_seed[i]) {
            pc.poison.rng_seed = derive_seed(cfg.master_seed, "poison", static_cast<std::uint64_t>(pc.client_id));
        }
    }
    return cfg;
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json dataset{{"num_classes", cfg.dataset.num_classes},
                         {"feature_dim", cfg.dataset.feature_dim},
                         {"examples_per_client", cfg.dataset.examples_per_client},
                         {"test_set_size", cfg.dataset.test_set_size},
                         {"generator_seed", cfg.dataset.generator_seed},
                         {"class_separation", cfg.dataset.class_separation},
                         {"pixel_scale", cfg.dataset.pixel_scale}};
    if (cfg.train_file) dataset["train_file"] = cfg.train_file->generic_string();
    if (cfg.test_file) dataset["test_file"] = cfg.test_file->generic_string();

    auto poisoned = ordered_json::array();
    for (const auto& pc : cfg.poisoned_clients) {
        const auto& p = pc.poison;
        ordered_json poison{{"strategy", to_string(p.strategy)}};
        switch (p.strategy) {
            case PoisonStrategy::random_label:
                poison["no_labels"] = p.no_labels;
                break;
            case PoisonStrategy::specific_label:
                poison["source_label"] = p.source_label;
                poison["target_label"] = p.target_label ? ordered_json(*p.target_label) : ordered_json("random");
                poison["part_of_labels"] = p.part_of_labels;
                break;
            case PoisonStrategy::random_pixel:
                poison["perc_img"] = p.perc_img;
                poison["nr_pixels"] = p.nr_pixels;
                poison["pixel_threshold"] = p.pixel_threshold;
                poison["pixel_group"] = p.pixel_group;
                break;
            case PoisonStrategy::none:
            case PoisonStrategy::lazy:
                break;
        }
        poison["rng_seed"] = p.rng_seed;
        poisoned.push_back(ordered_json{{"client_id", pc.client_id}, {"poison", poison}});
    }

    ordered_json detector = nullptr;
    if (cfg.detector) {
        const auto& d = *cfg.detector;
        detector = ordered_json{{"version", to_string(d.version)},
                                {"average_scale", d.average_scale},
                                {"label_scale", d.label_scale},
                                {"threshold",
                                 {{"round_offset", d.curve.round_offset},
                                  {"decay_exponent", d.curve.decay_exponent},
                                  {"log_coefficient", d.curve.log_coefficient},
                                  {"root_exponent", d.curve.root_exponent},
                                  {"gain", d.curve.gain},
                                  {"percent", d.curve.percent}}}};
    }

    return ordered_json{{"dataset", dataset},
                        {"num_clients", cfg.num_clients},
                        {"rounds", cfg.rounds},
                        {"train",
                         {{"epochs", cfg.train.epochs},
                          {"batch_size", cfg.train.batch_size},
                          {"learning_rate", cfg.train.learning_rate},
                          {"rng_seed", cfg.train.rng_seed},
                          {"hidden_units", cfg.hidden_units}}},
                        {"poisoned_clients", poisoned},
                        {"detector", detector},
                        {"blacklist",
                         {{"enabled", cfg.blacklist.enabled},
                          {"detections_required", cfg.blacklist.detections_required},
                          {"window_rounds", cfg.blacklist.window_rounds}}},
                        {"discard_on_arrival", cfg.discard_on_arrival},
                        {"compare_to_baseline", cfg.compare_to_baseline},
                        {"master_seed", cfg.master_seed}};
}

namespace {

struct PreparedData {
    Examples train;
    Examples test;
    ModelShape shape;
};

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData d;
    if (cfg.train_file) {
        d.train = load_examples_csv(*cfg.train_file, cfg.dataset.num_classes);
        if (d.train.empty()) throw ConfigError("dataset.train_file: no examples");
        const auto dim = static_cast<int>(d.train.front().features.size());
        d.test = load_examples_csv(*cfg.test_file, cfg.dataset.num_classes, dim);
        if (d.test.empty()) throw ConfigError("dataset.test_file: no examples");
        d.shape = ModelShape{dim, cfg.hidden_units, cfg.dataset.num_classes};
        return d;
    }
    const auto train_size =
        static_cast<std::size_t>(cfg.dataset.examples_per_client) * static_cast<std::size_t>(cfg.num_clients);
    auto ds = generate_synthetic_dataset(cfg.dataset, train_size);
    d.train = std::move(ds.train);
    d.test = std::move(ds.test);
    d.shape = ModelShape{cfg.dataset.feature_dim, cfg.hidden_units, cfg.dataset.num_classes};
    if (cfg.dataset.pixel_scale) {
        d.shape.input_offset = kPixelOffset;
        d.shape.input_scale = 1.0 / kPixelGain;
    }
    return d;
}

RunResult run_federation(const ExperimentConfig& cfg, const PreparedData& data, bool poisoned,
                         const NoticeSink& notice) {
    const auto seeds = derive_component_seeds(cfg);
    auto shards = partition_homogeneous(data.train, cfg.num_clients, seeds.partition);

    std::vector<ClientState> clients;
    clients.reserve(shards.size());
    for (auto& shard : shards) {
        ClientState c;
        c.client_id = shard.client_id;
        c.shard = std::move(shard);
        clients.push_back(std::move(c));
    }

    FederationOptions options;
    options.train = cfg.train;
    options.workers = cfg.workers;
    options.notice = notice;
    if (poisoned) {
        for (const auto& pc : cfg.poisoned_clients) clients[static_cast<std::size_t>(pc.client_id)].poison = pc.poison;
        options.detector = cfg.detector;
        options.blacklist = cfg.blacklist;
        options.discard_on_arrival = cfg.discard_on_arrival;
    } else {
        options.blacklist.enabled = false;
    }

    Federation federation(std::move(clients), data.test, init_params(data.shape, seeds.init), options);
    return federation.run(cfg.rounds);
}

}  // namespace

ExperimentResult execute_experiment(const ExperimentConfig& config, const NoticeSink& notice) {
    ExperimentResult result;
    result.config = resolve_seeds(config);
    const auto& cfg = result.config;
    cfg.validate();

    const auto data = prepare_data(cfg);
    for (const auto& pc : cfg.poisoned_clients) {
        pc.poison.validate(data.shape.num_classes, data.shape.input_dim);
    }

    result.run = run_federation(cfg, data, true, notice);
    const auto poisoned = cfg.poisoned_ids();
    result.matrix = update_confusion_matrix(result.run.records, poisoned);

    if (!poisoned.empty() && cfg.compare_to_baseline && !result.run.records.empty()) {
        result.baseline = run_federation(cfg, data, false, notice);
        result.outcome = classify_attack_success(result.baseline->records.back().global_accuracy,
                                                 result.run.records.back().global_accuracy);
    }
    return result;
}

void write_reports(const ExperimentResult& result) {
    ReportContext context;
    context.config = config_to_json(result.config);
    context.num_classes = result.config.dataset.num_classes;
    context.terminal_state = result.run.halted_at ? "halted_all_blacklisted" : "completed";
    context.poisoned_clients = result.config.poisoned_ids();
    emit_reports(result.run.records, result.matrix, result.outcome, context, result.config.output_dir);
}

int run_experiment(const ExperimentConfig& cfg) {
    try {
        const auto result = execute_experiment(cfg, [](const std::string& msg) { std::cerr << "notice: " << msg << '\n'; });
        write_reports(result);
        if (result.run.halted_at) {
            std::cerr << "run halted at round " << *result.run.halted_at << ": every client is blacklisted\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace fedsim
