#include "cfvqa/causal_model.hpp"
#include "cfvqa/dataset.hpp"
#include "cfvqa/errors.hpp"
#include "cfvqa/evaluator.hpp"
#include "cfvqa/gradcheck.hpp"
#include "cfvqa/resplit.hpp"
#include "cfvqa/synth.hpp"
#include "cfvqa/trainer.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace cfvqa;

namespace {

py::object from_json(const std::string &text) { return py::module_::import("json").attr("loads")(text); }

py::dict scores_dict(const model::CausalScores &s) {
    py::dict d;
    d["te"] = s.te.to_vector();
    d["nde"] = s.nde.to_vector();
    d["tie"] = s.tie.to_vector();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Counterfactual debiasing for medical VQA: resplitting, training and evaluation";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<InfeasibleSplitError>(m, "InfeasibleSplitError", PyExc_RuntimeError);

    py::class_<data::QASample>(m, "QASample")
        .def(py::init<>())
        .def_readwrite("id", &data::QASample::id)
        .def_readwrite("image_ref", &data::QASample::image_ref)
        .def_readwrite("question", &data::QASample::question_raw)
        .def_readwrite("question_tokens", &data::QASample::question_tokens)
        .def_readwrite("answer", &data::QASample::answer)
        .def_readwrite("question_type", &data::QASample::question_type)
        .def_property(
            "split", [](const data::QASample &s) { return std::string(data::split_name(s.split)); },
            [](data::QASample &s, const std::string &v) { s.split = data::parse_split(v); })
        .def("__repr__", [](const data::QASample &s) {
            return "<QASample " + s.id + " '" + s.question_raw + "' -> '" + s.answer + "'>";
        });

    m.def("normalize", &data::normalize, py::arg("text"));
    m.def(
        "load_dataset",
        [](const std::filesystem::path &path, const std::string &fieldmap) {
            const auto fields = fieldmap.empty() ? data::FieldMap::canonical() : data::FieldMap::load(fieldmap);
            return data::load_dataset(path, fields).samples;
        },
        py::arg("path"), py::arg("fieldmap") = "");
    m.def("to_canonical_jsonl", &data::to_canonical_jsonl, py::arg("samples"));
    m.def(
        "prior_table_csv",
        [](const std::vector<data::QASample> &samples, const std::string &key) {
            return data::PriorTable::build(samples, data::parse_key_mode(key)).to_csv();
        },
        py::arg("samples"), py::arg("key") = "exact_question");

    m.def(
        "resplit",
        [](const std::vector<data::QASample> &samples, double test_fraction, std::uint64_t seed) {
            const auto r = split::resplit_samples(samples, test_fraction, seed);
            const auto report = split::split_report(r.groups, r.result, r.samples);
            py::dict d;
            d["samples"] = r.samples;
            d["stats"] = from_json(report.stats_json);
            d["report_csv"] = report.csv;
            d["report_svg"] = report.svg;
            return d;
        },
        py::arg("samples"), py::arg("test_fraction") = 0.3, py::arg("seed") = 0);

    py::class_<synth::SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("templates", &synth::SynthConfig::templates)
        .def_readwrite("answers_per_template", &synth::SynthConfig::answers_per_template)
        .def_readwrite("dim", &synth::SynthConfig::dim)
        .def_readwrite("snr", &synth::SynthConfig::snr)
        .def_readwrite("rho", &synth::SynthConfig::rho)
        .def_readwrite("invert_test", &synth::SynthConfig::invert_test)
        .def_readwrite("train_count", &synth::SynthConfig::train_count)
        .def_readwrite("test_count", &synth::SynthConfig::test_count)
        .def_readwrite("seed", &synth::SynthConfig::seed);
    m.def("bayes_accuracy", &synth::bayes_accuracy, py::arg("snr"));

    py::class_<model::ImageSource>(m, "ImageSource")
        .def(py::init<>())
        .def_static("from_features", &model::ImageSource::from_features, py::arg("path"))
        .def_static("from_feature_text", &model::ImageSource::from_feature_text, py::arg("text"))
        .def_static("from_pgm_root", &model::ImageSource::from_pgm_root, py::arg("root"))
        .def("add_feature", &model::ImageSource::add_feature, py::arg("image_ref"), py::arg("vector"))
        .def_property_readonly("input_dim", &model::ImageSource::input_dim)
        .def("load", &model::ImageSource::load, py::arg("image_ref"));

    py::class_<synth::SynthCorpus>(m, "SynthCorpus")
        .def_readonly("train", &synth::SynthCorpus::train)
        .def_readonly("test", &synth::SynthCorpus::test)
        .def("train_images", &synth::SynthCorpus::train_images)
        .def("test_images", &synth::SynthCorpus::test_images)
        .def("features_jsonl", [](const synth::SynthCorpus &c) {
            auto all = c.train_features;
            all.insert(all.end(), c.test_features.begin(), c.test_features.end());
            return synth::features_jsonl(all);
        });
    m.def("generate_synth", &synth::generate, py::arg("config") = synth::SynthConfig{});

    py::class_<train::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &train::TrainConfig::epochs)
        .def_readwrite("batch_size", &train::TrainConfig::batch_size)
        .def_readwrite("lr", &train::TrainConfig::lr)
        .def_readwrite("lambda_k", &train::TrainConfig::lambda_k)
        .def_readwrite("lambda_q", &train::TrainConfig::lambda_q)
        .def_readwrite("lambda_v", &train::TrainConfig::lambda_v)
        .def_readwrite("lambda_cf", &train::TrainConfig::lambda_cf)
        .def_readwrite("seed", &train::TrainConfig::seed)
        .def_readwrite("embed", &train::TrainConfig::embed)
        .def_readwrite("question", &train::TrainConfig::question)
        .def_readwrite("image", &train::TrainConfig::image)
        .def_readwrite("knowledge", &train::TrainConfig::knowledge)
        .def_property(
            "fusion", [](const train::TrainConfig &c) { return std::string(model::fusion_name(c.fusion)); },
            [](train::TrainConfig &c, const std::string &v) { c.fusion = model::parse_fusion(v); })
        .def_property(
            "bias_mode", [](const train::TrainConfig &c) { return std::string(model::bias_mode_name(c.bias)); },
            [](train::TrainConfig &c, const std::string &v) { c.bias = model::parse_bias_mode(v); })
        .def_property(
            "optimizer",
            [](const train::TrainConfig &c) { return std::string(c.optimizer == train::Optimizer::adam ? "adam" : "sgd"); },
            [](train::TrainConfig &c, const std::string &v) {
                if (v != "adam" && v != "sgd") throw ValidationError("optimizer must be adam or sgd");
                c.optimizer = v == "adam" ? train::Optimizer::adam : train::Optimizer::sgd;
            });

    py::class_<model::CausalModel>(m, "CausalModel")
        .def_static("load", &model::CausalModel::load, py::arg("dir"))
        .def(
            "save", [](const model::CausalModel &self, const std::filesystem::path &dir) { self.save(dir); },
            py::arg("dir"))
        .def_property_readonly("answers", [](const model::CausalModel &self) { return self.answer_vocab.tokens(); })
        .def_property_readonly("fusion",
                               [](const model::CausalModel &self) { return std::string(model::fusion_name(self.spec.fusion)); })
        .def(
            "scores",
            [](const model::CausalModel &self, const data::QASample &s, const model::ImageSource &images) {
                tensor::NoGradGuard guard;
                return scores_dict(model::forward(self.encode(s, images), self).scores);
            },
            py::arg("sample"), py::arg("images"))
        .def(
            "predict",
            [](const model::CausalModel &self, const data::QASample &s, const model::ImageSource &images,
               const std::string &mode) {
                return self.answer_vocab.token_at(model::predict(self.encode(s, images), self, model::parse_mode(mode)));
            },
            py::arg("sample"), py::arg("images"), py::arg("mode") = "debiased");

    m.def(
        "train",
        [](const train::TrainConfig &cfg, const std::vector<data::QASample> &samples,
           const model::ImageSource &images) {
            train::TrainResult r = [&] {
                py::gil_scoped_release release;
                return train::train(cfg, samples, images);
            }();
            py::list metrics;
            for (const auto &e : r.metrics) {
                py::dict d;
                d["epoch"] = e.epoch;
                d["loss"] = e.loss;
                d["acc_biased"] = e.acc_biased;
                metrics.append(d);
            }
            return py::make_tuple(std::move(r.model), metrics);
        },
        py::arg("config"), py::arg("samples"), py::arg("images"));

    m.def(
        "evaluate",
        [](const model::CausalModel &model, const std::vector<data::QASample> &samples,
           const model::ImageSource &images, const std::string &mode, const std::string &dataset) {
            return from_json(eval::evaluate(model, samples, images, model::parse_mode(mode), dataset, eval::TypeMap())
                                 .to_json());
        },
        py::arg("model"), py::arg("samples"), py::arg("images"), py::arg("mode") = "debiased",
        py::arg("dataset") = "");
    m.def(
        "prior_only_baseline",
        [](const std::vector<data::QASample> &train, const std::vector<data::QASample> &test, const std::string &key,
           const std::string &dataset) {
            return from_json(
                eval::prior_only_baseline(train, test, data::parse_key_mode(key), dataset, eval::TypeMap()).to_json());
        },
        py::arg("train"), py::arg("test"), py::arg("key") = "exact_question", py::arg("dataset") = "");
    m.def(
        "compare",
        [](const std::string &left_json, const std::string &right_json) {
            const auto c = eval::compare(eval::EvalReport::from_json(left_json), eval::EvalReport::from_json(right_json));
            py::dict d;
            d["csv"] = c.to_csv();
            d["markdown"] = c.to_markdown();
            d["rows"] = from_json(c.to_json())["rows"];
            return d;
        },
        py::arg("left_json"), py::arg("right_json"));
    m.def(
        "explain",
        [](const model::CausalModel &model, const data::QASample &s, const model::ImageSource &images,
           std::size_t top) { return from_json(eval::explain(model, s, images, top).to_json()); },
        py::arg("model"), py::arg("sample"), py::arg("images"), py::arg("top") = 5);

    m.def(
        "debias",
        [](const std::vector<float> &te, const std::vector<float> &nde) {
            return model::debias(tensor::Tensor::vector(te), tensor::Tensor::vector(nde)).to_vector();
        },
        py::arg("te"), py::arg("nde"));

    m.def(
        "gradcheck",
        [](std::uint64_t seed, std::size_t cases) {
            const auto r = tensor::run_gradcheck_suite(seed, cases);
            py::dict d;
            d["max_rel_error"] = r.max_rel_error;
            d["checked"] = r.checked;
            d["skipped"] = r.skipped;
            d["passed"] = r.passed;
            return d;
        },
        py::arg("seed") = 1, py::arg("cases") = 100);
}
