#include "ildnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "ildnet/parse.hpp"
#include "ildnet/rng.hpp"

namespace ildnet {

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.values_ = {
        {"seed", "42"},
        {"lr", "0.00001"},
        {"batch_size", "32"},
        {"epochs", "50"},
        {"loss", "cross_entropy"},
        {"validation_fraction", "0.1"},
        {"arch.blocks", "32:7,64:5,96:3,128:3"},
        {"arch.dense", "1024,512,256"},
        {"arch.dropout", "0.25,0.4,0.4"},
        {"arch.classes", "5"},
        {"patch_size", "32"},
        {"coverage", "0.8"},
        {"hu.windows", "-1400:-950,-1000:200,-160:240"},
        {"augment.enabled", "true"},
        {"augment.transforms",
         "translation,horizontal-flip,rotation,scaling,shading,cropping,affine"},
        {"augment.factor", "7"},
        {"augment.keep_originals", "true"},
        {"test_per_class", "150"},
        {"kfold.k", "5"},
        {"kfold.stratified", "true"},
        {"data.store", ""},
        {"data.dir", ""},
        {"data.synthetic", "false"},
        {"data.per_class", "500"},
        {"out.dir", "out"},
    };
    return cfg;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, bool> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto notspace = [](unsigned char c) { return !std::isspace(c); };
        const auto first = std::find_if(line.begin(), line.end(), notspace);
        if (first == line.end()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const auto trim = [&notspace](std::string s) {
            s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
            s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
            return s;
        };
        const std::string key = trim(line.substr(0, eq));
        if (seen[key])
            throw ConfigError(path + ":" + std::to_string(lineno) + ": key '" + key + "' repeated");
        seen[key] = true;
        try {
            set(key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::set_pair(const std::string& pair) {
    const std::size_t eq = pair.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + pair + "' is not key=value");
    set(pair.substr(0, eq), pair.substr(eq + 1));
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not an integer");
    }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_u64(get(key), key); }

double RunConfig::get_double(const std::string& key) const { return parse_double(get(key), key); }

bool RunConfig::get_bool(const std::string& key) const { return parse_bool(get(key), key); }

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
    return out;
}

std::string RunConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

TrainingConfig RunConfig::training() const {
    TrainingConfig t;
    t.learning_rate = get_double("lr");
    t.batch_size = get_u64("batch_size");
    t.epochs = get_u64("epochs");
    const std::string& loss = get("loss");
    if (loss == "cross_entropy") t.loss = LossKind::cross_entropy;
    else if (loss == "mse") t.loss = LossKind::mean_squared_error;
    else throw ConfigError("loss: '" + loss + "' is not cross_entropy or mse");
    t.seed = get_u64("seed");
    t.validation_fraction = get_double("validation_fraction");
    t.validate();
    return t;
}

ArchitectureSpec RunConfig::architecture() const {
    ArchitectureSpec spec;
    spec.conv_blocks = parse_blocks(get("arch.blocks"), "arch.blocks");
    spec.dense_units = parse_size_list(get("arch.dense"), "arch.dense");
    spec.dropout_rates = parse_double_list(get("arch.dropout"), "arch.dropout");
    spec.num_classes = get_u64("arch.classes");
    spec.input_height = spec.input_width = get_u64("patch_size");
    spec.input_channels = hu_windows().size();
    spec.validate();
    return spec;
}

std::vector<HUWindow> RunConfig::hu_windows() const {
    std::vector<HUWindow> out;
    for (const std::string& part : split_list(get("hu.windows"), ',')) {
        // Window bounds may be negative, so split on the last ':'.
        const std::size_t colon = part.rfind(':');
        if (colon == std::string::npos || colon == 0)
            throw ConfigError("hu.windows: window '" + part + "' is not lo:hi");
        out.push_back({parse_double(part.substr(0, colon), "hu.windows"),
                       parse_double(part.substr(colon + 1), "hu.windows")});
    }
    if (out.empty()) throw ConfigError("hu.windows: no windows configured");
    return out;
}

std::vector<TransformKind> RunConfig::transforms() const {
    std::vector<TransformKind> out;
    for (const std::string& name : split_list(get("augment.transforms"), ','))
        out.push_back(parse_transform(name));
    return out;
}

}  // namespace ildnet
