#include "paraformer/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "paraformer/rng.hpp"

namespace paraformer {

int StageConfig::total_layers() const {
    int n = 0;
    for (int d : depths) n += d;
    return n;
}

void StageConfig::validate(int heads) const {
    if (depths.size() != 5 || dims.size() != 5)
        throw ConfigError("stage config needs exactly 5 depths and 5 dims");
    for (int d : depths)
        if (d < 1) throw ConfigError("stage depth must be >= 1");
    for (int64_t c : dims) {
        if (c < 1) throw ConfigError("stage dim must be >= 1");
        if (c % heads != 0) throw ConfigError("stage dim " + std::to_string(c) + " not divisible by heads");
    }
    // mirrored stages must agree for the skip connections
    if (dims[0] != dims[4] || dims[1] != dims[3])
        throw ConfigError("mirrored stage dims must match (skip connections)");
}

void ModelConfig::validate() const {
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (sinkhorn_iters < 1) throw ConfigError("sinkhorn_iters must be >= 1");
    if (!(match_threshold >= 0.0f && match_threshold <= 1.0f)) throw ConfigError("match_threshold must be in [0,1]");
    if (variant == Variant::ParaFormerU) {
        stages.validate(heads);
        if (stages.dims[0] != dim) throw ConfigError("dim must equal the first stage dim for the U variant");
    }
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::ParaFormer: return "paraformer";
        case Variant::ParaFormerU: return "paraformer_u";
        case Variant::SerialBaseline: return "serial_baseline";
    }
    return "?";
}

std::string pe_name(PeKind k) {
    switch (k) {
        case PeKind::Wave: return "wave";
        case PeKind::Mlp: return "mlp";
        case PeKind::None: return "none";
    }
    return "?";
}

std::string pool_name(PoolKind k) {
    switch (k) {
        case PoolKind::Attentional: return "attentional";
        case PoolKind::GPool: return "gpool";
        case PoolKind::Random: return "random";
    }
    return "?";
}

namespace {

Variant parse_variant(const std::string& s) {
    if (s == "paraformer") return Variant::ParaFormer;
    if (s == "paraformer_u") return Variant::ParaFormerU;
    if (s == "serial_baseline") return Variant::SerialBaseline;
    throw ConfigError("unknown variant: " + s);
}

PeKind parse_pe(const std::string& s) {
    if (s == "wave") return PeKind::Wave;
    if (s == "mlp") return PeKind::Mlp;
    if (s == "none") return PeKind::None;
    throw ConfigError("unknown pe: " + s);
}

PoolKind parse_pool(const std::string& s) {
    if (s == "attentional") return PoolKind::Attentional;
    if (s == "gpool") return PoolKind::GPool;
    if (s == "random") return PoolKind::Random;
    throw ConfigError("unknown pool: " + s);
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

int64_t parse_i64(const std::string& key, const std::string& s) {
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
}

double parse_f64(const std::string& key, const std::string& s) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
}

template <typename T>
std::vector<T> parse_int_list(const std::string& key, const std::string& s) {
    std::vector<T> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) out.push_back(static_cast<T>(parse_i64(key, item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_float(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "dim = " << dim << "\n";
    os << "heads = " << heads << "\n";
    os << "layers = " << layers << "\n";
    os << "match_threshold = " << fmt_float(match_threshold) << "\n";
    os << "pe = " << pe_name(pe) << "\n";
    os << "pool = " << pool_name(pool) << "\n";
    os << "seed = " << seed << "\n";
    os << "share_attn_weights = " << (share_attn_weights ? "true" : "false") << "\n";
    os << "share_fusion = " << (share_fusion ? "true" : "false") << "\n";
    os << "share_merge = " << (share_merge ? "true" : "false") << "\n";
    os << "share_qkv = " << (share_qkv ? "true" : "false") << "\n";
    os << "sinkhorn_iters = " << sinkhorn_iters << "\n";
    os << "stage_depths = " << join_list(stages.depths) << "\n";
    os << "stage_dims = " << join_list(stages.dims) << "\n";
    os << "variant = " << variant_name(variant) << "\n";
    return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    bool dim_set = false;
    const auto kv = parse_kv_text(text);
    if (auto it = kv.find("variant"); it != kv.end()) cfg.variant = parse_variant(it->second);
    for (const auto& [key, val] : kv) {
        if (key == "variant") {
            continue;
        } else if (key == "dim") {
            cfg.dim = parse_i64(key, val);
            dim_set = true;
        } else if (key == "heads") {
            cfg.heads = static_cast<int>(parse_i64(key, val));
        } else if (key == "layers") {
            cfg.layers = static_cast<int>(parse_i64(key, val));
        } else if (key == "pe") {
            cfg.pe = parse_pe(val);
        } else if (key == "pool") {
            cfg.pool = parse_pool(val);
        } else if (key == "share_qkv") {
            cfg.share_qkv = parse_bool(key, val);
        } else if (key == "share_merge") {
            cfg.share_merge = parse_bool(key, val);
        } else if (key == "share_attn_weights") {
            cfg.share_attn_weights = parse_bool(key, val);
        } else if (key == "share_fusion") {
            cfg.share_fusion = parse_bool(key, val);
        } else if (key == "stage_depths") {
            cfg.stages.depths = parse_int_list<int>(key, val);
        } else if (key == "stage_dims") {
            cfg.stages.dims = parse_int_list<int64_t>(key, val);
        } else if (key == "sinkhorn_iters") {
            cfg.sinkhorn_iters = static_cast<int>(parse_i64(key, val));
        } else if (key == "match_threshold") {
            cfg.match_threshold = static_cast<float>(parse_f64(key, val));
        } else if (key == "seed") {
            cfg.seed = static_cast<uint64_t>(parse_i64(key, val));
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    if (cfg.variant == Variant::ParaFormerU) {
        // layer count of the U variant is defined by the stage depths
        cfg.layers = cfg.stages.total_layers();
        if (!dim_set && !cfg.stages.dims.empty()) cfg.dim = cfg.stages.dims[0];
    }
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

uint64_t ModelConfig::hash() const {
    // the seed names a run, not an architecture; exclude it from the
    // compatibility hash so checkpoints load across seeds
    ModelConfig c = *this;
    c.seed = 0;
    const std::string t = c.to_text();
    return fnv1a(t.data(), t.size());
}

}  // namespace paraformer
