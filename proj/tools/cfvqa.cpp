// cfvqa command-line entry point. Every subcommand maps onto one library
// operation; artifact-producing ones write run.json beside their outputs.

#include "cfvqa/archive.hpp"
#include "cfvqa/causal_model.hpp"
#include "cfvqa/config.hpp"
#include "cfvqa/dataset.hpp"
#include "cfvqa/errors.hpp"
#include "cfvqa/evaluator.hpp"
#include "cfvqa/gradcheck.hpp"
#include "cfvqa/io.hpp"
#include "cfvqa/resplit.hpp"
#include "cfvqa/synth.hpp"
#include "cfvqa/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>

#ifndef CFVQA_VERSION
#define CFVQA_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace cfvqa;
using json = nlohmann::ordered_json;

namespace {

constexpr const char *kRunFile = "run.json";

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Everything needed to redo a run: resolved config, seed, hashed inputs.
class RunManifest {
  public:
    explicit RunManifest(std::string command) : command_(std::move(command)) {}

    void config(const std::string &key, const std::string &value) { config_[key] = value; }
    void config(const std::vector<std::pair<std::string, std::string>> &pairs, const std::string &prefix) {
        for (const auto &[k, v] : pairs) config_[prefix + k] = v;
    }
    void seed(std::uint64_t s) { seed_ = s; }
    void input(const fs::path &path) { inputs_[path.string()] = io::sha256_file(path); }
    void input_dir(const fs::path &path) { inputs_[path.string()] = "directory"; }
    void output(const fs::path &path) { outputs_.push_back(path.filename().string()); }

    void write(const fs::path &where) const {
        json j;
        j["tool"] = "cfvqa";
        j["version"] = CFVQA_VERSION;
        j["command"] = command_;
        j["timestamp"] = utc_timestamp();
        j["seed"] = seed_ ? json(*seed_) : json(nullptr);
        j["config"] = config_;
        j["inputs"] = inputs_;
        j["outputs"] = outputs_;
        io::write_file_atomic(where, j.dump(2) + "\n");
    }

  private:
    std::string command_;
    std::map<std::string, std::string> config_;
    std::optional<std::uint64_t> seed_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

fs::path manifest_beside(const fs::path &file) { return fs::path(file.string() + ".run.json"); }

// Config file plus --set overrides. A top-level `seed` feeds every module
// seed that is not given explicitly.
KeyValueConfig resolve_config(const std::string &path, const std::vector<std::string> &sets,
                              const std::vector<std::string> &module_prefixes, std::vector<std::string> allowed) {
    KeyValueConfig cfg = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
    for (const auto &s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ValidationError("--set expects key=value, got '" + s + "'");
        }
        auto trim = [](std::string v) {
            v.erase(0, v.find_first_not_of(" \t"));
            v.erase(v.find_last_not_of(" \t") + 1);
            return v;
        };
        cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    allowed.push_back("seed");
    cfg.require_known(allowed);
    if (const auto seed = cfg.get("seed")) {
        for (const auto &p : module_prefixes) {
            if (!cfg.contains(p + "seed")) cfg.set(p + "seed", *seed);
        }
    }
    for (const auto &[k, v] : cfg.entries()) spdlog::info("config {} = {}", k, v);
    return cfg;
}

std::vector<data::QASample> read_samples(const fs::path &path, const std::string &fieldmap) {
    const auto fields = fieldmap.empty() ? data::FieldMap::canonical() : data::FieldMap::load(fieldmap);
    auto loaded = data::load_dataset(path, fields);
    if (loaded.skipped > 0) spdlog::warn("{}: skipped {} records", path.string(), loaded.skipped);
    if (loaded.samples.empty()) throw EmptyDatasetError("no usable records in " + path.string());
    return std::move(loaded.samples);
}

struct ImageOptions {
    std::vector<std::string> features;
    std::string pgm_root;

    void add_to(CLI::App *cmd) {
        cmd->add_option("--features", features, "Feature JSONL file(s) keyed by image_ref")->check(CLI::ExistingFile);
        cmd->add_option("--images", pgm_root, "Root directory of PGM images")->check(CLI::ExistingDirectory);
    }

    model::ImageSource build(RunManifest *manifest) const {
        model::ImageSource src;
        if (!features.empty()) {
            std::string text;
            for (const auto &f : features) {
                text += io::read_file(f);
                if (!text.empty() && text.back() != '\n') text += '\n';
                if (manifest) manifest->input(f);
            }
            src = model::ImageSource::from_feature_text(text);
        }
        if (!pgm_root.empty()) {
            src.set_pgm_root(pgm_root);
            if (manifest) manifest->input_dir(pgm_root);
        }
        return src;
    }
};

std::vector<data::QASample> filter_split(std::vector<data::QASample> samples, const std::string &split) {
    if (split == "all") return samples;
    const auto want = data::parse_split(split);
    std::erase_if(samples, [&](const data::QASample &s) { return s.split != want; });
    if (samples.empty()) throw EmptyDatasetError("no samples in split " + split);
    return samples;
}

struct Command {
    std::string name;
    std::string help;
    std::function<void(CLI::App *, std::function<void()> &)> setup;
};

// ---------------------------------------------------------------- commands

void setup_ingest(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string input, fieldmap, split = "unassigned", out;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--input", o->input, "JSON or JSONL source file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--fieldmap", o->fieldmap, "Source key mapping (see config/*.fieldmap)")->check(CLI::ExistingFile);
    cmd->add_option("--split", o->split, "Split for records without one")
        ->check(CLI::IsMember({"train", "test", "unassigned"}));
    cmd->add_option("--out", o->out, "Canonical JSONL output")->required();
    run = [o] {
        RunManifest m("ingest");
        const auto fields = o->fieldmap.empty() ? data::FieldMap::canonical() : data::FieldMap::load(o->fieldmap);
        const auto loaded = data::load_dataset(o->input, fields, data::parse_split(o->split));
        m.input(o->input);
        if (!o->fieldmap.empty()) m.input(o->fieldmap);
        m.config("split", o->split);
        if (loaded.samples.empty()) throw EmptyDatasetError("no usable records in " + o->input);
        io::write_file_atomic(o->out, data::to_canonical_jsonl(loaded.samples));
        m.output(o->out);
        m.write(manifest_beside(o->out));
        fmt::print("{} samples written, {} skipped\n", loaded.samples.size(), loaded.skipped);
        for (std::size_t i = 0; i < std::min<std::size_t>(loaded.skip_reasons.size(), 5); ++i) {
            fmt::print("  skipped: {}\n", loaded.skip_reasons[i]);
        }
    };
}

void setup_audit(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string data, fieldmap, key = "exact_question", out, match;
        std::size_t top = 20;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--data", o->data, "Dataset file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--fieldmap", o->fieldmap, "Source key mapping; canonical when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--key", o->key, "Prior key")->check(CLI::IsMember({"exact_question", "question_type"}));
    cmd->add_option("--match", o->match, "Only keys containing this text");
    cmd->add_option("--top", o->top, "Keys to print, most frequent first");
    cmd->add_option("--out", o->out, "Full prior table as CSV");
    run = [o] {
        const auto samples = read_samples(o->data, o->fieldmap);
        const auto table = data::PriorTable::build(samples, data::parse_key_mode(o->key));
        struct Row {
            std::string key;
            data::Split split;
            std::size_t total, top, rest;
            std::string answer;
        };
        std::vector<Row> rows;
        for (const auto &[key, by_split] : table.table()) {
            if (!o->match.empty() && key.find(o->match) == std::string::npos) continue;
            for (const auto &[split, counts] : by_split) {
                const auto [top, rest] = table.dominance(key, split);
                std::string best;
                std::size_t best_n = 0;
                for (const auto &[a, n] : counts) {
                    if (n > best_n) best = a, best_n = n;
                }
                rows.push_back({key, split, top + rest, top, rest, best});
            }
        }
        std::stable_sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) { return a.total > b.total; });
        fmt::print("{} samples, {} keys ({})\n", samples.size(), table.table().size(), o->key);
        for (std::size_t i = 0; i < std::min(o->top, rows.size()); ++i) {
            const auto &r = rows[i];
            fmt::print("{:>6} {:<10} {}:{}  top '{}'  {}\n", r.total, data::split_name(r.split), r.top, r.rest,
                       r.answer, r.key);
        }
        if (!o->out.empty()) {
            RunManifest m("audit");
            m.input(o->data);
            m.config("key", o->key);
            io::write_file_atomic(o->out, table.to_csv());
            m.output(o->out);
            m.write(manifest_beside(o->out));
        }
    };
}

void setup_resplit(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string input, out;
        double fraction = 0.3;
        std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--input", o->input, "Canonical JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test-fraction", o->fraction, "Target share of samples in test");
    cmd->add_option("--seed", o->seed, "Recorded in stats; the split itself is deterministic");
    cmd->add_option("--out", o->out, "Output directory")->required();
    run = [o] {
        RunManifest m("resplit");
        m.input(o->input);
        m.seed(o->seed);
        m.config("test_fraction", fmt::format("{}", o->fraction));
        const auto samples = data::load_canonical(o->input);
        const auto r = split::resplit_samples(samples, o->fraction, o->seed);
        std::vector<data::QASample> train, test;
        for (const auto &s : r.samples) (s.split == data::Split::test ? test : train).push_back(s);
        const auto report = split::split_report(r.groups, r.result, r.samples);
        const fs::path dir = o->out;
        const std::vector<std::pair<std::string, std::string>> files = {
            {"train.jsonl", data::to_canonical_jsonl(train)},
            {"test.jsonl", data::to_canonical_jsonl(test)},
            {"stats.json", report.stats_json},
            {"report.csv", report.csv},
            {"report.svg", report.svg}};
        for (const auto &[name, content] : files) {
            io::write_file_atomic(dir / name, content);
            m.output(dir / name);
        }
        m.write(dir / kRunFile);
        const auto &st = r.result.stats;
        fmt::print("train {} / test {} samples (test fraction {:.3f}, target {:.3f}), {} groups repaired\n",
                   st.train_samples, st.test_samples, st.test_fraction_achieved, st.target_fraction,
                   st.repaired_group_count);
    };
}

void setup_synth(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string config, out;
        std::vector<std::string> sets;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--config", o->config, "key=value file with synth.* keys")->check(CLI::ExistingFile);
    cmd->add_option("--set", o->sets, "Override, e.g. --set synth.rho=0.95");
    cmd->add_option("--out", o->out, "Output directory")->required();
    run = [o] {
        const auto kv = resolve_config(o->config, o->sets, {"synth."}, synth::SynthConfig::keys());
        const auto cfg = synth::SynthConfig::from_config(kv);
        RunManifest m("synth");
        if (!o->config.empty()) m.input(o->config);
        m.seed(cfg.seed);
        m.config(cfg.to_pairs(), "synth.");
        const auto corpus = synth::generate(cfg);
        auto features = corpus.train_features;
        features.insert(features.end(), corpus.test_features.begin(), corpus.test_features.end());
        const fs::path dir = o->out;
        const std::vector<std::pair<std::string, std::string>> files = {
            {"train.jsonl", data::to_canonical_jsonl(corpus.train)},
            {"test.jsonl", data::to_canonical_jsonl(corpus.test)},
            {"features.jsonl", synth::features_jsonl(features)}};
        for (const auto &[name, content] : files) {
            io::write_file_atomic(dir / name, content);
            m.output(dir / name);
        }
        m.write(dir / kRunFile);
        fmt::print("{} train / {} test samples, image-only Bayes accuracy {:.3f}\n", corpus.train.size(),
                   corpus.test.size(), synth::bayes_accuracy(cfg.snr));
    };
}

void setup_train(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string config, data, fieldmap, out;
        std::vector<std::string> sets;
        ImageOptions images;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--config", o->config, "key=value file with train.* keys")->check(CLI::ExistingFile);
    cmd->add_option("--set", o->sets, "Override, e.g. --set train.fusion=hm");
    cmd->add_option("--data", o->data, "Training samples (test-split records are ignored)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--fieldmap", o->fieldmap, "Source key mapping; canonical when omitted")
        ->check(CLI::ExistingFile);
    o->images.add_to(cmd);
    cmd->add_option("--out", o->out, "Checkpoint directory")->required();
    run = [o] {
        const auto kv = resolve_config(o->config, o->sets, {"train."}, train::TrainConfig::keys());
        const auto cfg = train::TrainConfig::from_config(kv);
        RunManifest m("train");
        if (!o->config.empty()) m.input(o->config);
        m.input(o->data);
        m.seed(cfg.seed);
        m.config(cfg.to_pairs(), "train.");
        const auto samples = read_samples(o->data, o->fieldmap);
        const auto images = o->images.build(&m);
        const auto result = train::train(cfg, samples, images);
        std::vector<std::pair<std::string, std::string>> meta;
        for (const auto &[k, v] : cfg.to_pairs()) meta.emplace_back("train." + k, v);
        const fs::path dir = o->out;
        result.model.save(dir, meta);
        io::write_file_atomic(dir / "metrics.csv", result.metrics_csv());
        for (const auto &entry : fs::directory_iterator(dir)) {
            if (entry.path().filename() != kRunFile) m.output(entry.path());
        }
        m.write(dir / kRunFile);
        const auto &last = result.metrics.back();
        fmt::print("epoch {} loss {:.4f} train acc (biased) {:.4f}\n", last.epoch, last.loss, last.acc_biased);
    };
}

void setup_eval(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string ckpt, data, fieldmap, mode = "debiased", train, key = "exact_question", typemap, dataset,
                                          split = "all", out, predictions;
        ImageOptions images;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--ckpt", o->ckpt, "Checkpoint directory (not used by prior_only)")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--data", o->data, "Evaluation samples")->required()->check(CLI::ExistingFile);
    cmd->add_option("--fieldmap", o->fieldmap, "Source key mapping; canonical when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--mode", o->mode, "Decision rule")
        ->check(CLI::IsMember({"biased", "debiased", "prior_only"}));
    cmd->add_option("--train", o->train, "Training samples for prior_only")->check(CLI::ExistingFile);
    cmd->add_option("--key", o->key, "Prior key for prior_only")
        ->check(CLI::IsMember({"exact_question", "question_type"}));
    cmd->add_option("--typemap", o->typemap, "Question-type to report-row mapping")->check(CLI::ExistingFile);
    cmd->add_option("--dataset", o->dataset, "Dataset tag in the report (defaults to the file stem)");
    cmd->add_option("--split", o->split, "Which samples to score")
        ->check(CLI::IsMember({"all", "train", "test", "unassigned"}));
    cmd->add_option("--predictions", o->predictions, "Per-sample predictions as CSV");
    o->images.add_to(cmd);
    cmd->add_option("--out", o->out, "Report JSON")->required();
    run = [o] {
        RunManifest m("eval");
        m.input(o->data);
        m.config("mode", o->mode);
        m.config("split", o->split);
        const auto types = o->typemap.empty() ? eval::TypeMap() : eval::TypeMap::load(o->typemap);
        if (!o->typemap.empty()) m.input(o->typemap);
        const auto samples = filter_split(read_samples(o->data, o->fieldmap), o->split);
        const std::string tag = o->dataset.empty() ? fs::path(o->data).stem().string() : o->dataset;
        std::vector<eval::Prediction> preds;
        eval::EvalReport report;
        if (o->mode == "prior_only") {
            if (o->train.empty()) throw ValidationError("--mode prior_only needs --train");
            m.input(o->train);
            m.config("key", o->key);
            const auto train = read_samples(o->train, o->fieldmap);
            report = eval::prior_only_baseline(train, samples, data::parse_key_mode(o->key), tag, types, &preds);
        } else {
            if (o->ckpt.empty()) throw ValidationError("--mode " + o->mode + " needs --ckpt");
            for (const auto f : {tensor::kManifestFile, tensor::kPayloadFile}) m.input(fs::path(o->ckpt) / f);
            const auto model = model::CausalModel::load(o->ckpt);
            const auto images = o->images.build(&m);
            report = eval::evaluate(model, samples, images, model::parse_mode(o->mode), tag, types, &preds);
        }
        io::write_file_atomic(o->out, report.to_json());
        m.output(o->out);
        if (!o->predictions.empty()) {
            std::string csv = "id,answer,predicted\n";
            for (const auto &p : preds) {
                csv += io::csv_field(p.id) + "," + io::csv_field(p.answer) + "," + io::csv_field(p.predicted) + "\n";
            }
            io::write_file_atomic(o->predictions, csv);
            m.output(o->predictions);
        }
        m.write(manifest_beside(o->out));
        fmt::print("{} {} accuracy {:.4f} ({}/{})\n", tag, report.mode, report.overall.accuracy().value_or(0.0),
                   report.overall.correct, report.overall.count);
    };
}

void setup_compare(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string left, right, out;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--left", o->left, "Baseline report JSON (e.g. biased)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--right", o->right, "Report JSON to compare (e.g. debiased)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", o->out, "Output directory for comparison.{csv,md,json}")->required();
    run = [o] {
        RunManifest m("compare");
        m.input(o->left);
        m.input(o->right);
        const auto c = eval::compare(eval::EvalReport::from_json(io::read_file(o->left)),
                                     eval::EvalReport::from_json(io::read_file(o->right)));
        const fs::path dir = o->out;
        for (const auto &[name, content] : std::vector<std::pair<std::string, std::string>>{
                 {"comparison.csv", c.to_csv()}, {"comparison.md", c.to_markdown()}, {"comparison.json", c.to_json()}}) {
            io::write_file_atomic(dir / name, content);
            m.output(dir / name);
        }
        m.write(dir / kRunFile);
        fmt::print("{}", c.to_markdown());
    };
}

void setup_explain(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::string ckpt, data, fieldmap, out;
        std::vector<std::string> ids;
        std::size_t limit = 5, top = 5;
        ImageOptions images;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--ckpt", o->ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--data", o->data, "Samples")->required()->check(CLI::ExistingFile);
    cmd->add_option("--fieldmap", o->fieldmap, "Source key mapping; canonical when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--id", o->ids, "Sample ids to explain (default: the first --limit samples)");
    cmd->add_option("--limit", o->limit, "Samples to explain when no --id is given");
    cmd->add_option("--top", o->top, "Answers listed per score");
    o->images.add_to(cmd);
    cmd->add_option("--out", o->out, "JSONL output; stdout when omitted");
    run = [o] {
        const auto model = model::CausalModel::load(o->ckpt);
        const auto samples = read_samples(o->data, o->fieldmap);
        const auto images = o->images.build(nullptr);
        std::vector<const data::QASample *> chosen;
        if (o->ids.empty()) {
            for (std::size_t i = 0; i < std::min(o->limit, samples.size()); ++i) chosen.push_back(&samples[i]);
        } else {
            for (const auto &id : o->ids) {
                const auto it = std::find_if(samples.begin(), samples.end(), [&](auto &s) { return s.id == id; });
                if (it == samples.end()) throw ValidationError("no sample with id '" + id + "'");
                chosen.push_back(&*it);
            }
        }
        std::string out;
        for (const auto *s : chosen) {
            out += json::parse(eval::explain(model, *s, images, o->top).to_json()).dump() + "\n";
        }
        if (o->out.empty()) {
            fmt::print("{}", out);
        } else {
            io::write_file_atomic(o->out, out);
        }
    };
}

void setup_gradcheck(CLI::App *cmd, std::function<void()> &run) {
    struct Opts {
        std::uint64_t seed = 1;
        std::size_t cases = 100;
        float eps = 1e-3f;
        double tol = 1e-3;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--seed", o->seed, "Network generator seed");
    cmd->add_option("--cases", o->cases, "Random networks to check");
    cmd->add_option("--eps", o->eps, "Finite-difference step");
    cmd->add_option("--tol", o->tol, "Maximum relative error");
    run = [o] {
        const auto r = tensor::run_gradcheck_suite(o->seed, o->cases, o->eps, o->tol);
        fmt::print("max relative error {:.3e} over {} networks ({} parameter checks, {} coordinates, {} skipped at "
                   "kinks): {}\n",
                   r.max_rel_error, o->cases, r.cases.size(), r.checked, r.skipped, r.passed ? "PASS" : "FAIL");
        if (!r.passed) throw TrainingError("gradient check failed");
    };
}

std::vector<Command> registry() {
    return {
        {"ingest", "Normalize a SLAKE/RadVQA-style file into canonical JSONL", setup_ingest},
        {"audit", "Report question->answer prior dominance", setup_audit},
        {"resplit", "Build a changing-priors train/test split", setup_resplit},
        {"synth", "Generate a synthetic biased corpus with image features", setup_synth},
        {"train", "Train the causal model", setup_train},
        {"eval", "Per-type accuracy of a checkpoint or the prior-only baseline", setup_eval},
        {"compare", "Side-by-side table of two evaluation reports", setup_compare},
        {"explain", "Top answers under TE, NDE and TIE for selected samples", setup_explain},
        {"gradcheck", "Finite-difference check of the autodiff primitives", setup_gradcheck},
    };
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"cfvqa: counterfactual debiasing for medical visual question answering"};
    app.set_version_flag("--version", std::string(CFVQA_VERSION));
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    const auto commands = registry();
    std::vector<std::function<void()>> runners(commands.size());
    std::vector<CLI::App *> subs;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        auto *sub = app.add_subcommand(commands[i].name, commands[i].help);
        commands[i].setup(sub, runners[i]);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("cfvqa"));
    spdlog::set_level(spdlog::level::from_str(log_level));
    try {
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (subs[i]->parsed()) runners[i]();
        }
    } catch (const ValidationError &e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception &e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
