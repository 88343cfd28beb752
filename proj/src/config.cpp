#include "cwp/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cwp {

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (manifest.empty()) throw ConfigError("config: missing required key 'manifest'");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KvFile {
    std::map<std::string, std::string> kv;
    std::set<std::string> consumed;

    bool has(const std::string& key) const { return kv.count(key) != 0; }

    std::string take(const std::string& key) {
        consumed.insert(key);
        return kv.at(key);
    }

    int take_int(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const std::string v = take(key);
        try {
            size_t pos = 0;
            const int out = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
        }
    }

    float take_float(const std::string& key, float fallback) {
        if (!has(key)) return fallback;
        const std::string v = take(key);
        try {
            size_t pos = 0;
            const float out = std::stof(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
        }
    }

    bool take_bool(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const std::string v = take(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
    }
};

}  // namespace

static RunConfig parse_run_config_stream(std::istream& in) {
    KvFile f;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + " is not key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: line " + std::to_string(line_no) + " empty key");
        if (f.kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "' on line " + std::to_string(line_no));
        f.kv[key] = value;
    }

    RunConfig cfg;
    for (const char* required : {"manifest", "epochs", "warmup_epochs", "batch_size"})
        if (!f.has(required))
            throw ConfigError("config: missing required key '" + std::string(required) + "'");

    cfg.manifest = f.take("manifest");
    cfg.model.scales = f.take_int("scales", cfg.model.scales);
    cfg.model.base_channels = f.take_int("base_channels", cfg.model.base_channels);
    cfg.model.prompt_count = f.take_int("prompt_count", cfg.model.prompt_count);
    cfg.model.clusters = f.take_int("clusters", cfg.model.clusters);
    cfg.model.conv_depth = f.take_int("conv_depth", cfg.model.conv_depth);
    cfg.model.prompt_base = f.take_int("prompt_base", cfg.model.prompt_base);
    cfg.model.in_channels = f.take_int("in_channels", cfg.model.in_channels);
    cfg.model.reduction = f.take_int("reduction", cfg.model.reduction);
    cfg.model.sa_kernel = f.take_int("sa_kernel", cfg.model.sa_kernel);
    cfg.train.epochs = f.take_int("epochs", cfg.train.epochs);
    cfg.train.warmup_epochs = f.take_int("warmup_epochs", cfg.train.warmup_epochs);
    cfg.train.batch_size = f.take_int("batch_size", cfg.train.batch_size);
    cfg.train.lr0 = f.take_float("lr0", cfg.train.lr0);
    cfg.train.lr1 = f.take_float("lr1", cfg.train.lr1);
    cfg.train.lambda = f.take_float("lambda", cfg.train.lambda);
    cfg.train.seed = static_cast<uint32_t>(f.take_int("seed", 0));
    cfg.train.crop = f.take_int("crop", cfg.train.crop);
    cfg.train.augment = f.take_bool("augment", cfg.train.augment);

    for (const auto& [key, value] : f.kv)
        if (!f.consumed.count(key)) throw ConfigError("config: unknown key '" + key + "'");

    cfg.validate();
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return parse_run_config_stream(in);
}

RunConfig parse_run_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_run_config_stream(in);
}

std::string run_config_to_string(const RunConfig& cfg) {
    std::ostringstream os;
    os << "manifest=" << cfg.manifest << "\n";
    os << "scales=" << cfg.model.scales << "\n";
    os << "base_channels=" << cfg.model.base_channels << "\n";
    os << "prompt_count=" << cfg.model.prompt_count << "\n";
    os << "clusters=" << cfg.model.clusters << "\n";
    os << "conv_depth=" << cfg.model.conv_depth << "\n";
    os << "prompt_base=" << cfg.model.prompt_base << "\n";
    os << "in_channels=" << cfg.model.in_channels << "\n";
    os << "reduction=" << cfg.model.reduction << "\n";
    os << "sa_kernel=" << cfg.model.sa_kernel << "\n";
    os << "epochs=" << cfg.train.epochs << "\n";
    os << "warmup_epochs=" << cfg.train.warmup_epochs << "\n";
    os << "batch_size=" << cfg.train.batch_size << "\n";
    os << "lr0=" << cfg.train.lr0 << "\n";
    os << "lr1=" << cfg.train.lr1 << "\n";
    os << "lambda=" << cfg.train.lambda << "\n";
    os << "seed=" << cfg.train.seed << "\n";
    os << "crop=" << cfg.train.crop << "\n";
    os << "augment=" << (cfg.train.augment ? "true" : "false") << "\n";
    return os.str();
}

}  // namespace cwp
