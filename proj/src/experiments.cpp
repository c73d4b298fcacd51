#include "lwat/experiments.hpp"

#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>

namespace lwat::repro {

namespace {

std::map<std::string, std::string> parse_kv(const std::string& spec) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("dataset spec: expected k=v, got '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

int64_t kv_int(const std::map<std::string, std::string>& kv, const std::string& k, int64_t dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stoll(it->second);
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& k, double dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stod(it->second);
}

} // namespace

std::array<int64_t, 3> parse_widths(const std::string& spec) {
    std::array<int64_t, 3> w{};
    std::stringstream ss(spec);
    std::string tok;
    for (auto& slot : w) {
        if (!std::getline(ss, tok, ':')) throw ConfigError("conv_widths needs 3 values, got " + spec);
        slot = std::stoll(tok);
    }
    return w;
}

DataPair resolve_dataset(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

    if (kind == "cifar10") {
        if (rest.empty()) throw ConfigError("dataset cifar10: needs a directory");
        namespace fs = std::filesystem;
        std::vector<std::string> trainFiles;
        for (int i = 1; i <= 5; ++i)
            trainFiles.push_back((fs::path(rest) / ("data_batch_" + std::to_string(i) + ".bin")).string());
        const std::string testFile = (fs::path(rest) / "test_batch.bin").string();
        DataPair d{load_cifar10_binary(trainFiles, Split::Train, true),
                   load_cifar10_binary({testFile}, Split::Test, true)};
        return d;
    }
    if (kind == "cifar100") {
        if (rest.empty()) throw ConfigError("dataset cifar100: needs a directory");
        namespace fs = std::filesystem;
        DataPair d{load_cifar100_binary({(fs::path(rest) / "train.bin").string()}, Split::Train),
                   load_cifar100_binary({(fs::path(rest) / "test.bin").string()}, Split::Test)};
        return d;
    }
    if (kind == "synthetic-cifar") {
        const auto kv = parse_kv(rest);
        SynthImageOptions o;
        o.classes = static_cast<int>(kv_int(kv, "classes", 10));
        o.perClass = kv_int(kv, "per_class", 500);
        o.seed = static_cast<uint64_t>(kv_int(kv, "seed", 0));
        o.noise = kv_double(kv, "noise", o.noise);
        o.distractor = kv_double(kv, "distractor", o.distractor);
        o.maxShift = kv_int(kv, "max_shift", o.maxShift);
        o.contrastJitter = kv_double(kv, "contrast", o.contrastJitter);
        o.split = Split::Train;
        Dataset train = synthetic_images(o);
        o.perClass = kv_int(kv, "test_per_class", 200);
        o.split = Split::Test;
        Dataset test = synthetic_images(o);
        return {std::move(train), std::move(test)};
    }
    if (kind == "blobs") {
        const auto kv = parse_kv(rest);
        const int classes = static_cast<int>(kv_int(kv, "classes", 3));
        const int perClass = static_cast<int>(kv_int(kv, "per_class", 200));
        const int64_t dim = kv_int(kv, "dim", 16);
        const double spread = kv_double(kv, "spread", 0.3);
        const uint64_t seed = static_cast<uint64_t>(kv_int(kv, "seed", 0));
        Dataset train = synthetic_blobs(classes, perClass, dim, spread, seed);
        Dataset test = synthetic_blobs(classes, std::max(1, perClass / 4), dim, spread, seed + 1);
        test.split = Split::Test;
        return {std::move(train), std::move(test)};
    }
    throw ConfigError("unknown dataset kind '" + kind + "'");
}

Recipe recipe_from_config(const ExperimentConfig& cfg) {
    Recipe r;
    r.arch = cfg.arch;
    r.widths = parse_widths(cfg.convWidths);
    r.classes = cfg.classes;
    r.gradaccPrefix = cfg.gradaccPrefix;
    r.dropout = cfg.dropout;
    r.train = cfg.train;
    return r;
}

RunResult run_recipe(const Dataset& trainData, const Dataset& testData, const Recipe& recipe,
                     std::ostream* log) {
    BuildOptions b;
    b.classes = recipe.classes;
    b.convWidths = recipe.widths;
    b.gradaccPrefix = recipe.gradaccPrefix;
    b.dropout = recipe.dropout;
    b.seed = recipe.train.seed;
    if (recipe.arch == "toy-fc") {
        b.inputDim = trainData.images.size() / trainData.size();
    } else {
        b.inputChannels = trainData.images.extent(1);
    }

    RunResult r;
    r.model = build_model(recipe.arch, b);
    if (log)
        *log << "train " << recipe.arch << " mode=" << to_string(recipe.train.mode)
             << " eps=" << recipe.train.epsBase << " prefix=" << recipe.gradaccPrefix
             << " seed=" << recipe.train.seed << "\n";
    r.trace = train(r.model, trainData, testData, recipe.train);
    r.testAcc = 1.0 - r.trace.epochs.back().testErr;
    if (log) {
        *log << "  final: train_loss=" << r.trace.epochs.back().trainLoss
             << " test_acc=" << 100.0 * r.testAcc << "%\n";
    }
    return r;
}

// ---------------------------------------------------------------------------

ToyResult run_toy(const Dataset& trainGray, const Dataset& testGray, const ToyParams& p,
                  std::ostream* log) {
    Recipe base;
    base.arch = "toy-fc";
    base.classes = trainGray.classes;
    base.train.epochs = p.epochs;
    base.train.batchSize = p.batch;
    base.train.lr = p.lr;
    base.train.weightDecay = p.weightDecay;
    base.train.momentum = p.momentum;
    base.train.seed = p.seed;

    ToyResult r;

    Recipe rb = base;
    rb.gradaccPrefix = 0;
    rb.train.mode = TrainMode::Baseline;
    auto resB = run_recipe(trainGray, testGray, rb, log);
    r.baseline = std::move(resB.model);
    r.accBaseline = 100.0 * resB.testAcc;

    Recipe rf = base;
    rf.gradaccPrefix = 0;
    rf.train.mode = TrainMode::FgsOrig;
    rf.train.epsBase = p.epsFgs;
    rf.train.alpha = p.alphaFgs;
    auto resF = run_recipe(trainGray, testGray, rf, log);
    r.fgs = std::move(resF.model);
    r.accFgs = 100.0 * resF.testAcc;

    Recipe ro = base;
    ro.gradaccPrefix = -1;
    ro.train.mode = TrainMode::OursOrig;
    ro.train.epsBase = p.epsOurs;
    ro.train.epsNormalize = true;
    auto resO = run_recipe(trainGray, testGray, ro, log);
    r.ours = std::move(resO.model);
    r.accOurs = 100.0 * resO.testAcc;
    return r;
}

CompareAdvResult run_compare_adv(const Dataset& trainData, const Dataset& testData,
                                 const CompareAdvParams& p, std::ostream* log) {
    Recipe r = p.recipe;
    r.train.mode = TrainMode::Baseline;
    if (r.gradaccPrefix == 0) r.gradaccPrefix = -1; // the attack needs insertion points
    auto run = run_recipe(trainData, testData, r, log);

    std::vector<double> eps = p.epsList;
    CompareAdvResult out;
    if (log) *log << "  fgs-input sweep\n";
    out.fgs = eps_sweep(run.model, testData, AttackKind::FgsInput, eps, 250);
    if (log) *log << "  cached-layerwise sweep\n";
    out.cached = eps_sweep(run.model, testData, AttackKind::CachedLayerwise, eps, p.attackBatch);
    if (log) *log << "  cached-input-only sweep\n";
    out.cachedInputOnly =
        eps_sweep(run.model, testData, AttackKind::CachedInputOnly, eps, p.attackBatch);
    return out;
}

VariantsResult run_variants(const Dataset& trainData, const Dataset& testData,
                            const VariantsParams& p, std::ostream* log) {
    VariantsResult out;
    for (TrainMode mode : p.modes) {
        Recipe r = p.base;
        r.train.mode = mode;
        switch (mode) {
            case TrainMode::Baseline:
                r.gradaccPrefix = 0;
                r.train.epsBase = 0;
                break;
            case TrainMode::FgsOrig:
                r.gradaccPrefix = 0;
                r.train.epsBase = p.epsFgs;
                r.train.alpha = 0.5;
                break;
            case TrainMode::FgsInter:
                r.train.epsBase = p.epsOurs;
                r.train.alpha = 0.5;
                break;
            case TrainMode::OursOrig:
                r.train.epsBase = p.epsOurs;
                break;
            case TrainMode::OursJoint:
                r.train.epsBase = p.epsOurs;
                r.train.alpha = 0.5;
                break;
            case TrainMode::Random:
                r.train.epsBase = 0.05; // fixed intensity
                break;
        }
        auto run = run_recipe(trainData, testData, r, log);
        out.names.push_back(to_string(mode));
        out.sweeps.push_back(eps_sweep(run.model, testData, AttackKind::FgsInput, p.epsList, 250));
    }
    return out;
}

LayerSweepResult run_layer_sweep(const Dataset& trainData, const Dataset& testData,
                                 const LayerSweepParams& p, std::ostream* log) {
    LayerSweepResult out;
    out.prefixes = p.prefixes;
    for (int prefix : p.prefixes) {
        std::vector<double> accs;
        for (uint64_t seed : p.seeds) {
            Recipe r = p.base;
            r.train.mode = TrainMode::OursOrig;
            r.gradaccPrefix = prefix;
            r.train.seed = seed;
            auto run = run_recipe(trainData, testData, r, log);
            accs.push_back(100.0 * run.testAcc);
        }
        double mean = 0;
        for (double a : accs) mean += a;
        out.meanAcc.push_back(mean / static_cast<double>(accs.size()));
        out.accPerSeed.push_back(std::move(accs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// markdown
// ---------------------------------------------------------------------------

namespace {
std::string fmt(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}
} // namespace

std::string toy_markdown(const ToyResult& r) {
    std::ostringstream os;
    os << "| Model | Accuracy (%) |\n|---|---|\n";
    os << "| Baseline | " << fmt(r.accBaseline) << " |\n";
    os << "| FGS | " << fmt(r.accFgs) << " |\n";
    os << "| Ours | " << fmt(r.accOurs) << " |\n";
    return os.str();
}

namespace {
std::string sweep_row(const std::string& name, const EpsSweepReport& rep) {
    std::ostringstream os;
    os << "| " << name << " |";
    for (const auto& row : rep.rows) os << ' ' << fmt(row.accuracy) << " |";
    os << '\n';
    return os.str();
}

std::string sweep_header(const EpsSweepReport& rep) {
    std::ostringstream os;
    os << "| Type |";
    for (const auto& row : rep.rows) os << " eps=" << row.eps << " |";
    os << "\n|---|";
    for (size_t i = 0; i < rep.rows.size(); ++i) os << "---|";
    os << '\n';
    return os.str();
}
} // namespace

std::string compare_adv_markdown(const CompareAdvResult& r) {
    std::ostringstream os;
    os << sweep_header(r.fgs);
    os << sweep_row("FGS", r.fgs);
    os << sweep_row("Ours - all layers", r.cached);
    os << sweep_row("Ours - input only", r.cachedInputOnly);
    return os.str();
}

std::string variants_markdown(const VariantsResult& r) {
    std::ostringstream os;
    if (r.sweeps.empty()) return "";
    os << sweep_header(r.sweeps[0]);
    for (size_t i = 0; i < r.names.size(); ++i) os << sweep_row(r.names[i], r.sweeps[i]);
    return os.str();
}

std::string layer_sweep_markdown(const LayerSweepResult& r) {
    std::ostringstream os;
    os << "| Layer (conv1 to) |";
    for (int p : r.prefixes) os << " pool" << p << " |";
    os << "\n|---|";
    for (size_t i = 0; i < r.prefixes.size(); ++i) os << "---|";
    os << "\n| Accuracy |";
    for (double a : r.meanAcc) os << ' ' << fmt(a) << " |";
    os << "\n";
    return os.str();
}

} // namespace lwat::repro
