// Experiment runner: train / eval / spectrum / bound / repro.
// Exit codes: 0 ok, 2 usage or config, 3 data or format, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lwat/analysis.hpp"
#include "lwat/config.hpp"
#include "lwat/experiments.hpp"
#include "lwat/rng.hpp"
#include "lwat/threading.hpp"
#include "lwat/version.hpp"

namespace fs = std::filesystem;
using namespace lwat;

namespace {

struct GlobalOpts {
    int64_t seed = -1; // -1: keep the config's seed
    int threads = 1;
    std::string out;
    bool force = false;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
}

void write_manifest(const fs::path& dir, const std::string& hash, uint64_t seed,
                    const std::string& configText) {
    nlohmann::json j;
    j["hash"] = hash;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["config"] = configText;
    write_file(dir / "manifest.json", j.dump(2));
}

lwat::repro::DataPair load_data(const ExperimentConfig& cfg) {
    auto data = lwat::repro::resolve_dataset(cfg.dataset);
    if (cfg.trainPerClass > 0) data.train = take_per_class(data.train, cfg.trainPerClass);
    if (cfg.grayscale) {
        data.train = to_grayscale(data.train);
        data.test = to_grayscale(data.test);
    }
    if (cfg.normalizeData) {
        const DataStats stats = compute_stats(data.train);
        data.train = normalize(data.train, stats);
        data.test = normalize(data.test, stats);
    }
    return data;
}

int cmd_train(const std::string& configPath, const GlobalOpts& g) {
    ExperimentConfig cfg = ExperimentConfig::load(configPath);
    if (g.seed >= 0) cfg.train.seed = static_cast<uint64_t>(g.seed);
    if (!g.out.empty()) cfg.outDir = g.out;
    if (g.threads > 0) cfg.threads = g.threads;
    set_num_threads(cfg.threads);

    const std::string hash = cfg.hash();
    const fs::path runDir = fs::path(cfg.outDir) / hash;
    if (fs::exists(runDir / "manifest.json") && !g.force) {
        std::cout << "run " << hash << " already exists under " << runDir
                  << " (use --force to rerun)\n";
        return 0;
    }
    fs::create_directories(runDir);

    auto data = load_data(cfg);
    auto recipe = lwat::repro::recipe_from_config(cfg);
    auto result = lwat::repro::run_recipe(data.train, data.test, recipe, &std::cout);

    save_checkpoint((runDir / "checkpoint.lwck").string(), result.model);
    {
        std::ofstream os(runDir / "trace.csv");
        write_trace_csv(os, result.trace);
    }
    write_manifest(runDir, hash, cfg.train.seed, cfg.serialize());

    if (cfg.runEval) {
        auto report = eps_sweep(result.model, data.test, attack_from_string(cfg.evalAttack),
                                cfg.evalEps);
        write_file(runDir / "eval.json", sweep_to_json(report));
        std::ofstream os(runDir / "eval.csv");
        write_sweep_csv(os, report);
    }
    if (cfg.runSpectrum) {
        auto report = singular_spectrum(result.model, data.test, cfg.spectrumSamples,
                                        cfg.spectrumTopK);
        write_file(runDir / "spectrum.json", spectrum_to_json(report));
        std::ofstream os(runDir / "spectrum.csv");
        write_spectrum_csv(os, report);
    }
    if (cfg.runBound) {
        Rng rng(cfg.train.seed ^ 0xb0121dULL);
        const int perSample = 10;
        const int nSamples = (cfg.boundTrials + perSample - 1) / perSample;
        int passed = 0, total = 0;
        double maxRatio = 0;
        const int64_t rowLen = data.test.images.size() / data.test.size();
        Shape sshape = data.test.images.shape();
        sshape[0] = 1;
        for (int s = 0; s < nSamples && total < cfg.boundTrials; ++s) {
            Tensor x(sshape, std::vector<float>(data.test.images.data() + s * rowLen,
                                                data.test.images.data() + (s + 1) * rowLen));
            const Tensor jac = encoder_jacobian(result.model, x);
            const auto sv = singular_values(jac);
            for (int d = 0; d < perSample && total < cfg.boundTrials; ++d, ++total) {
                Tensor delta({rowLen});
                for (int64_t i = 0; i < rowLen; ++i)
                    delta[i] = static_cast<float>(1e-4 * rng.normal());
                const auto chk = bound_check_with(jac, sv, delta);
                passed += chk.ok;
                if (chk.rhs > 0) maxRatio = std::max(maxRatio, chk.lhs / chk.rhs);
            }
        }
        nlohmann::json j;
        j["kind"] = "bound-check";
        j["model"] = result.model.descriptor();
        j["params"] = {{"trials", total}};
        j["rows"] = {{{"passed", passed}, {"max_ratio", maxRatio}}};
        write_file(runDir / "bound.json", j.dump(2));
        std::cout << "bound check: " << passed << "/" << total << " passed, max lhs/rhs = "
                  << maxRatio << "\n";
    }
    std::cout << "artifacts in " << runDir << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& attack,
             const std::vector<double>& epsList, const std::string& dataset, bool gray,
             int64_t attackBatch, const GlobalOpts& g) {
    set_num_threads(g.threads);
    Model model = load_checkpoint(checkpoint);
    ExperimentConfig dcfg;
    dcfg.dataset = dataset;
    dcfg.grayscale = gray;
    auto data = load_data(dcfg);
    auto report = eps_sweep(model, data.test, attack_from_string(attack), epsList, attackBatch);
    const fs::path outDir = g.out.empty() ? fs::path(".") : fs::path(g.out);
    fs::create_directories(outDir);
    write_file(outDir / "eval.json", sweep_to_json(report));
    std::ofstream os(outDir / "eval.csv");
    write_sweep_csv(os, report);
    for (const auto& row : report.rows)
        std::cout << "eps=" << row.eps << " accuracy=" << row.accuracy << "%\n";
    return 0;
}

int cmd_spectrum(const std::string& checkpoint, int samples, int topk, const std::string& dataset,
                 bool gray, const GlobalOpts& g) {
    set_num_threads(g.threads);
    Model model = load_checkpoint(checkpoint);
    ExperimentConfig dcfg;
    dcfg.dataset = dataset;
    dcfg.grayscale = gray;
    auto data = load_data(dcfg);
    auto report = singular_spectrum(model, data.test, samples, topk);
    const fs::path outDir = g.out.empty() ? fs::path(".") : fs::path(g.out);
    fs::create_directories(outDir);
    write_file(outDir / "spectrum.json", spectrum_to_json(report));
    std::ofstream os(outDir / "spectrum.csv");
    write_spectrum_csv(os, report);
    std::cout << "top singular values:";
    for (size_t i = 0; i < std::min<size_t>(8, report.sigma.size()); ++i)
        std::cout << ' ' << report.sigma[i];
    std::cout << "\n";
    return 0;
}

int cmd_bound(const std::string& checkpoint, int trials, const std::string& dataset, bool gray,
              const GlobalOpts& g) {
    set_num_threads(g.threads);
    Model model = load_checkpoint(checkpoint);
    ExperimentConfig dcfg;
    dcfg.dataset = dataset;
    dcfg.grayscale = gray;
    auto data = load_data(dcfg);

    Rng rng(0xb0121dULL);
    const int perSample = 10;
    const int nSamples = (trials + perSample - 1) / perSample;
    int passed = 0, total = 0;
    double maxRatio = 0;
    const int64_t rowLen = data.test.images.size() / data.test.size();
    Shape sshape = data.test.images.shape();
    sshape[0] = 1;
    for (int s = 0; s < nSamples && total < trials; ++s) {
        Tensor x(sshape, std::vector<float>(data.test.images.data() + s * rowLen,
                                            data.test.images.data() + (s + 1) * rowLen));
        const Tensor jac = encoder_jacobian(model, x);
        const auto sv = singular_values(jac);
        for (int d = 0; d < perSample && total < trials; ++d, ++total) {
            Tensor delta({rowLen});
            for (int64_t i = 0; i < rowLen; ++i) delta[i] = static_cast<float>(1e-4 * rng.normal());
            const auto chk = bound_check_with(jac, sv, delta);
            passed += chk.ok;
            if (chk.rhs > 0) maxRatio = std::max(maxRatio, chk.lhs / chk.rhs);
        }
    }
    std::cout << "bound check: " << passed << "/" << total << " passed, max lhs/rhs = " << maxRatio
              << "\n";
    return passed == total ? 0 : 4;
}

int cmd_repro(const std::string& table, const std::string& dataset, bool quick,
              const GlobalOpts& g) {
    set_num_threads(g.threads);
    ExperimentConfig dcfg;
    dcfg.dataset = dataset;
    const fs::path outDir = (g.out.empty() ? fs::path("runs") : fs::path(g.out)) / ("repro-" + table);
    fs::create_directories(outDir);

    const uint64_t seed = g.seed >= 0 ? static_cast<uint64_t>(g.seed) : 0;

    if (table == "toy") {
        dcfg.grayscale = true;
        auto data = load_data(dcfg);
        lwat::repro::ToyParams p;
        p.seed = seed;
        if (quick) {
            p.epochs = 12;
            p.lr = {0.05, 5.0, 5};
        }
        auto r = lwat::repro::run_toy(data.train, data.test, p, &std::cout);
        const std::string md = lwat::repro::toy_markdown(r);
        write_file(outDir / "toy.md", md);
        std::cout << md;
        return 0;
    }

    auto data = load_data(dcfg);
    lwat::repro::Recipe base;
    base.classes = data.train.classes;
    base.train.seed = seed;
    if (quick) {
        base.widths = {8, 16, 32};
        base.train.epochs = 10;
        base.train.lr = {0.05, 5.0, 4};
        base.train.batchSize = 100;
    } else {
        base.train.epochs = 60;
        base.train.lr = {0.1, 5.0, 25};
    }

    if (table == "compare-adv") {
        lwat::repro::CompareAdvParams p;
        p.recipe = base;
        auto r = lwat::repro::run_compare_adv(data.train, data.test, p, &std::cout);
        const std::string md = lwat::repro::compare_adv_markdown(r);
        write_file(outDir / "compare-adv.md", md);
        write_file(outDir / "fgs.json", sweep_to_json(r.fgs));
        write_file(outDir / "cached.json", sweep_to_json(r.cached));
        write_file(outDir / "cached-input-only.json", sweep_to_json(r.cachedInputOnly));
        std::cout << md;
        return 0;
    }
    if (table == "variants") {
        lwat::repro::VariantsParams p;
        p.base = base;
        auto r = lwat::repro::run_variants(data.train, data.test, p, &std::cout);
        const std::string md = lwat::repro::variants_markdown(r);
        write_file(outDir / "variants.md", md);
        for (size_t i = 0; i < r.names.size(); ++i)
            write_file(outDir / (r.names[i] + ".json"), sweep_to_json(r.sweeps[i]));
        std::cout << md;
        return 0;
    }
    if (table == "layer-sweep") {
        lwat::repro::LayerSweepParams p;
        p.base = base;
        if (quick) p.seeds = {0, 1, 2};
        auto r = lwat::repro::run_layer_sweep(data.train, data.test, p, &std::cout);
        const std::string md = lwat::repro::layer_sweep_markdown(r);
        write_file(outDir / "layer-sweep.md", md);
        std::cout << md;
        return 0;
    }
    throw ConfigError("unknown repro table '" + table + "' (toy|compare-adv|variants|layer-sweep)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"layerwise adversarial training experiments (lwat " + std::string(kVersion) + ")"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "override the experiment seed");
    app.add_option("--threads", g.threads, "worker threads (default 1, bitwise reproducible)");
    app.add_option("--out", g.out, "output directory");
    app.add_flag("--force", g.force, "rerun even if the config hash already has artifacts");

    auto* trainCmd = app.add_subcommand("train", "train a model from a config file");
    std::string configPath;
    trainCmd->add_option("config", configPath, "key = value config file")->required();

    auto* evalCmd = app.add_subcommand("eval", "adversarial epsilon sweep on a checkpoint");
    std::string checkpoint, attack = "fgs-input", dataset = "synthetic-cifar";
    std::vector<double> epsList = {0.0, 0.05, 0.1};
    bool gray = false;
    bool quick = false;
    int64_t attackBatch = 1;
    evalCmd->add_option("checkpoint", checkpoint)->required();
    evalCmd->add_option("--attack", attack, "fgs-input|cached-layerwise|cached-input-only");
    evalCmd->add_option("--eps", epsList, "epsilon list (strictly increasing)");
    evalCmd->add_option("--data", dataset, "dataset spec");
    evalCmd->add_flag("--gray", gray, "convert to grayscale");
    evalCmd->add_option("--attack-batch", attackBatch, "cached attack batch size (1 = fidelity)");

    auto* spectrumCmd = app.add_subcommand("spectrum", "encoder Jacobian singular-value spectrum");
    int samples = 20, topk = 50;
    spectrumCmd->add_option("checkpoint", checkpoint)->required();
    spectrumCmd->add_option("--samples", samples);
    spectrumCmd->add_option("--topk", topk);
    spectrumCmd->add_option("--data", dataset, "dataset spec");
    spectrumCmd->add_flag("--gray", gray);

    auto* boundCmd = app.add_subcommand("bound", "first-order perturbation bound check");
    int trials = 100;
    boundCmd->add_option("checkpoint", checkpoint)->required();
    boundCmd->add_option("--trials", trials);
    boundCmd->add_option("--data", dataset, "dataset spec");
    boundCmd->add_flag("--gray", gray);

    auto* reproCmd = app.add_subcommand("repro", "desk-scale reproduction recipes");
    std::string table;
    reproCmd->add_option("table", table, "toy|compare-adv|variants|layer-sweep")->required();
    reproCmd->add_option("--data", dataset, "dataset spec");
    reproCmd->add_flag("--quick", quick, "reduced-budget recipe");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (trainCmd->parsed()) return cmd_train(configPath, g);
        if (evalCmd->parsed()) return cmd_eval(checkpoint, attack, epsList, dataset, gray, attackBatch, g);
        if (spectrumCmd->parsed()) return cmd_spectrum(checkpoint, samples, topk, dataset, gray, g);
        if (boundCmd->parsed()) return cmd_bound(checkpoint, trials, dataset, gray, g);
        if (reproCmd->parsed()) return cmd_repro(table, dataset, quick, g);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
