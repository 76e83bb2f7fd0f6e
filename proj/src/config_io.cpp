#include "dekan/config_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dekan/error.hpp"
#include "dekan/train.hpp"

namespace dekan {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("setting " + key + ": '" + v + "' is not an integer");
    return out;
}

int to_int32(const std::string& key, const std::string& v) { return static_cast<int>(to_int(key, v)); }

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("setting " + key + ": '" + v + "' is not a non-negative integer");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("setting " + key + ": '" + v + "' is not a number");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("setting " + key + ": '" + v + "' is not true/false");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
        throw ConfigError("setting " + key + ": expected a [a, b, ...] list");
    }
    std::vector<int> out;
    std::stringstream ss(v.substr(1, v.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_int32(key, item));
    }
    return out;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

void apply_model_setting(ModelConfig& m, const std::string& key, const std::string& v) {
    if (key == "image_size") {
        m.image_h = m.image_w = to_int32(key, v);
    } else if (key == "image_h") {
        m.image_h = to_int32(key, v);
    } else if (key == "image_w") {
        m.image_w = to_int32(key, v);
    } else if (key == "in_channels") {
        m.in_channels = to_int32(key, v);
    } else if (key == "patch_size") {
        m.patch_size = to_int32(key, v);
    } else if (key == "embed_dim") {
        m.embed_dim = to_int32(key, v);
    } else if (key == "grid_lo") {
        m.grid.lo = to_double(key, v);
    } else if (key == "grid_hi") {
        m.grid.hi = to_double(key, v);
    } else if (key == "grid_intervals") {
        m.grid.intervals = to_int32(key, v);
    } else if (key == "spline_order") {
        m.grid.order = to_int32(key, v);
    } else if (key == "width_multiplier") {
        m.width_multiplier = to_double(key, v);
    } else if (key == "decoder_channels") {
        m.decoder_channels = to_int_list(key, v);
    } else if (key == "classes") {
        m.classes = to_int32(key, v);
    } else if (key == "seed") {
        m.seed = to_u64(key, v);
    } else {
        throw ConfigError("unknown model setting '" + key + "'");
    }
}

void apply_augment_setting(AugmentSpec& a, const std::string& key, const std::string& v) {
    if (key == "brightness_limit") {
        a.brightness_limit = to_double(key, v);
    } else if (key == "contrast_limit") {
        a.contrast_limit = to_double(key, v);
    } else if (key == "blur_min") {
        a.blur_min = to_int32(key, v);
    } else if (key == "blur_max") {
        a.blur_max = to_int32(key, v);
    } else if (key == "hue_shift_limit") {
        a.hue_shift_limit = to_double(key, v);
    } else if (key == "sat_shift_limit") {
        a.sat_shift_limit = to_double(key, v);
    } else if (key == "val_shift_limit") {
        a.val_shift_limit = to_double(key, v);
    } else if (key == "probability") {
        a.probability = to_double(key, v);
    } else if (key == "seed") {
        a.seed = to_u64(key, v);
    } else if (key == "enabled") {
        if (!to_bool(key, v)) {
            const auto seed = a.seed;
            a = AugmentSpec::none();
            a.seed = seed;
        }
    } else {
        throw ConfigError("unknown augment setting '" + key + "'");
    }
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = unquote(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second) {
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    return out;
}

std::string model_config_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "image_h = " << c.image_h << "\n";
    os << "image_w = " << c.image_w << "\n";
    os << "in_channels = " << c.in_channels << "\n";
    os << "patch_size = " << c.patch_size << "\n";
    os << "embed_dim = " << c.embed_dim << "\n";
    os << "grid_lo = " << format_double(c.grid.lo) << "\n";
    os << "grid_hi = " << format_double(c.grid.hi) << "\n";
    os << "grid_intervals = " << c.grid.intervals << "\n";
    os << "spline_order = " << c.grid.order << "\n";
    os << "width_multiplier = " << format_double(c.width_multiplier) << "\n";
    os << "decoder_channels = [";
    for (std::size_t i = 0; i < c.decoder_channels.size(); ++i) os << (i ? ", " : "") << c.decoder_channels[i];
    os << "]\n";
    os << "classes = " << c.classes << "\n";
    os << "seed = " << c.seed << "\n";
    return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
    ModelConfig c;
    for (const auto& [k, v] : parse_key_values(text)) apply_model_setting(c, k, v);
    return c;
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
    if (key.rfind("model.", 0) == 0) {
        apply_model_setting(c.model, key.substr(6), v);
    } else if (key.rfind("augment.", 0) == 0) {
        apply_augment_setting(c.augment, key.substr(8), v);
    } else if (key == "batch_size") {
        c.batch_size = to_int32(key, v);
    } else if (key == "lr") {
        c.lr = to_double(key, v);
    } else if (key == "momentum") {
        c.momentum = to_double(key, v);
    } else if (key == "weight_decay") {
        c.weight_decay = to_double(key, v);
    } else if (key == "min_lr") {
        c.min_lr = to_double(key, v);
    } else if (key == "epochs") {
        c.epochs = to_int32(key, v);
    } else if (key == "early_stop_patience") {
        c.early_stop_patience = to_int32(key, v);
    } else if (key == "seed") {
        c.seed = to_u64(key, v);
    } else if (key == "train_fraction") {
        c.train_fraction = to_double(key, v);
    } else if (key == "log_train_dice") {
        c.log_train_dice = to_bool(key, v);
    } else if (key == "data") {
        c.data_root = v;
    } else if (key == "output") {
        c.output_dir = v;
    } else if (key == "import_weights") {
        c.import_weights = v;
    } else {
        throw ConfigError("unknown setting '" + key + "'");
    }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    TrainConfig c;
    for (const auto& [k, v] : parse_key_values(ss.str())) apply_setting(c, k, v);
    return c;
}

}  // namespace dekan
