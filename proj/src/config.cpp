#include "lwat/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lwat/analysis.hpp"
#include "lwat/errors.hpp"

namespace lwat {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("field '" + key + "': expected a boolean, got '" + v + "'");
}

int64_t parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw ConfigError("field '" + key + "': expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw ConfigError("field '" + key + "': expected a number, got '" + v + "'");
    }
}

std::vector<double> parse_double_list(const std::string& v, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(parse_double(tok, key));
    }
    return out;
}

std::string fmt_double(double v) {
    if (v == static_cast<int64_t>(v) && std::abs(v) < 1e15) {
        std::ostringstream os;
        os << static_cast<int64_t>(v);
        return os.str();
    }
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineNo = 0;
    while (std::getline(ss, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineNo) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "mode") cfg.train.mode = train_mode_from_string(val);
        else if (key == "eps") cfg.train.epsBase = parse_double(val, key);
        else if (key == "alpha") cfg.train.alpha = parse_double(val, key);
        else if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(val, key));
        else if (key == "batch_size") cfg.train.batchSize = parse_int(val, key);
        else if (key == "lr") cfg.train.lr.base = parse_double(val, key);
        else if (key == "lr_drop_factor") cfg.train.lr.dropFactor = parse_double(val, key);
        else if (key == "lr_drop_period") cfg.train.lr.dropPeriod = static_cast<int>(parse_int(val, key));
        else if (key == "momentum") cfg.train.momentum = parse_double(val, key);
        else if (key == "weight_decay") cfg.train.weightDecay = parse_double(val, key);
        else if (key == "seed") cfg.train.seed = static_cast<uint64_t>(parse_int(val, key));
        else if (key == "eps_normalize") cfg.train.epsNormalize = parse_bool(val, key);
        else if (key == "flip") cfg.train.flip = parse_bool(val, key);
        else if (key == "arch") cfg.arch = val;
        else if (key == "classes") cfg.classes = parse_int(val, key);
        else if (key == "conv_widths") cfg.convWidths = val;
        else if (key == "gradacc_prefix") cfg.gradaccPrefix = static_cast<int>(parse_int(val, key));
        else if (key == "dropout") cfg.dropout = parse_double(val, key);
        else if (key == "dataset") cfg.dataset = val;
        else if (key == "grayscale") cfg.grayscale = parse_bool(val, key);
        else if (key == "normalize_data") cfg.normalizeData = parse_bool(val, key);
        else if (key == "train_per_class") cfg.trainPerClass = parse_int(val, key);
        else if (key == "out_dir") cfg.outDir = val;
        else if (key == "eval_eps") cfg.evalEps = parse_double_list(val, key);
        else if (key == "eval_attack") cfg.evalAttack = val;
        else if (key == "run_eval") cfg.runEval = parse_bool(val, key);
        else if (key == "run_spectrum") cfg.runSpectrum = parse_bool(val, key);
        else if (key == "spectrum_samples") cfg.spectrumSamples = static_cast<int>(parse_int(val, key));
        else if (key == "spectrum_topk") cfg.spectrumTopK = static_cast<int>(parse_int(val, key));
        else if (key == "run_bound") cfg.runBound = parse_bool(val, key);
        else if (key == "bound_trials") cfg.boundTrials = static_cast<int>(parse_int(val, key));
        else if (key == "threads") cfg.threads = static_cast<int>(parse_int(val, key));
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse(buf.str());
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream os;
    os << "mode = " << to_string(train.mode) << '\n';
    os << "eps = " << fmt_double(train.epsBase) << '\n';
    os << "alpha = " << fmt_double(train.alpha) << '\n';
    os << "epochs = " << train.epochs << '\n';
    os << "batch_size = " << train.batchSize << '\n';
    os << "lr = " << fmt_double(train.lr.base) << '\n';
    os << "lr_drop_factor = " << fmt_double(train.lr.dropFactor) << '\n';
    os << "lr_drop_period = " << train.lr.dropPeriod << '\n';
    os << "momentum = " << fmt_double(train.momentum) << '\n';
    os << "weight_decay = " << fmt_double(train.weightDecay) << '\n';
    os << "seed = " << train.seed << '\n';
    os << "eps_normalize = " << (train.epsNormalize ? "true" : "false") << '\n';
    os << "flip = " << (train.flip ? "true" : "false") << '\n';
    os << "arch = " << arch << '\n';
    os << "classes = " << classes << '\n';
    os << "conv_widths = " << convWidths << '\n';
    os << "gradacc_prefix = " << gradaccPrefix << '\n';
    os << "dropout = " << fmt_double(dropout) << '\n';
    os << "dataset = " << dataset << '\n';
    os << "grayscale = " << (grayscale ? "true" : "false") << '\n';
    os << "normalize_data = " << (normalizeData ? "true" : "false") << '\n';
    os << "train_per_class = " << trainPerClass << '\n';
    os << "out_dir = " << outDir << '\n';
    os << "eval_eps = ";
    for (size_t i = 0; i < evalEps.size(); ++i) os << (i ? "," : "") << fmt_double(evalEps[i]);
    os << '\n';
    os << "eval_attack = " << evalAttack << '\n';
    os << "run_eval = " << (runEval ? "true" : "false") << '\n';
    os << "run_spectrum = " << (runSpectrum ? "true" : "false") << '\n';
    os << "spectrum_samples = " << spectrumSamples << '\n';
    os << "spectrum_topk = " << spectrumTopK << '\n';
    os << "run_bound = " << (runBound ? "true" : "false") << '\n';
    os << "bound_trials = " << boundTrials << '\n';
    os << "threads = " << threads << '\n';
    return os.str();
}

std::string ExperimentConfig::hash() const {
    const std::string text = serialize();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    for (int i = 15; i >= 0; --i) os << ((h >> (i * 4)) & 0xf);
    return os.str();
}

void ExperimentConfig::validate() const {
    if (train.alpha < 0.0 || train.alpha > 1.0) throw ConfigError("field 'alpha': must be in [0,1]");
    if (train.epochs < 1) throw ConfigError("field 'epochs': must be >= 1");
    if (train.batchSize < 1) throw ConfigError("field 'batch_size': must be >= 1");
    if (train.lr.dropPeriod < 1) throw ConfigError("field 'lr_drop_period': must be >= 1");
    if (train.lr.dropFactor <= 0) throw ConfigError("field 'lr_drop_factor': must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("field 'dropout': must be in [0,1)");
    if (arch != "toy-fc" && arch != "small-conv")
        throw ConfigError("field 'arch': unknown architecture '" + arch + "'");
    if (threads < 1) throw ConfigError("field 'threads': must be >= 1");
    if (classes < 2) throw ConfigError("field 'classes': must be >= 2");
    for (size_t i = 1; i < evalEps.size(); ++i)
        if (evalEps[i] <= evalEps[i - 1])
            throw ConfigError("field 'eval_eps': must be strictly increasing");
    attack_from_string(evalAttack); // validates
}

} // namespace lwat
