#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <unordered_map>

#include "bmembed/bm25.hpp"
#include "bmembed/corpus.hpp"
#include "bmembed/embedding.hpp"
#include "bmembed/eval.hpp"
#include "bmembed/fixture.hpp"
#include "bmembed/fusion.hpp"
#include "bmembed/pipeline.hpp"
#include "bmembed/sampler.hpp"
#include "bmembed/trainer.hpp"

namespace py = pybind11;
using namespace bmembed;

namespace {

PartitionScheme make_scheme(int m, const std::string& strategy, int first_len,
                            double growth,
                            const std::vector<std::pair<int, int>>& boundaries) {
    PartitionScheme scheme;
    scheme.m = m;
    scheme.first_len = first_len;
    scheme.growth = growth;
    scheme.boundaries = boundaries;
    if (strategy == "uniform")
        scheme.strategy = PartitionStrategy::uniform;
    else if (strategy == "fine_to_coarse")
        scheme.strategy = PartitionStrategy::fine_to_coarse;
    else if (strategy == "explicit")
        scheme.strategy = PartitionStrategy::explicit_bounds;
    else
        throw std::invalid_argument("unknown strategy: " + strategy);
    return scheme;
}

}  // namespace

PYBIND11_MODULE(_bmembed, mod) {
    mod.doc() = "BM25-supervised embedding adaptation core";

    mod.def(
        "tokenize",
        [](const std::string& text) { return tokenize(text); },
        py::arg("text"));

    py::class_<Chunk>(mod, "Chunk")
        .def_readonly("chunk_id", &Chunk::chunk_id)
        .def_readonly("doc_id", &Chunk::doc_id)
        .def_readonly("text", &Chunk::text)
        .def_readonly("token_count", &Chunk::token_count)
        .def_readonly("char_start", &Chunk::char_start)
        .def_readonly("char_end", &Chunk::char_end);

    mod.def(
        "chunk_document",
        [](const std::string& doc_id, const std::string& text, int chunk_size) {
            Document doc;
            doc.doc_id = doc_id;
            doc.text = text;
            return chunk_document(doc, chunk_size);
        },
        py::arg("doc_id"), py::arg("text"), py::arg("chunk_size") = 256);

    py::class_<InvertedIndex>(mod, "Bm25Index")
        .def(py::init([](const std::vector<Chunk>& chunks, double k1, double b) {
                 return build_index(chunks, Bm25Params{k1, b});
             }),
             py::arg("chunks"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
        .def_property_readonly("num_chunks",
                               [](const InvertedIndex& idx) { return idx.num_chunks; })
        .def("idf",
             [](const InvertedIndex& idx, const std::string& term) {
                 return idf(idx, term);
             })
        .def(
            "search",
            [](const InvertedIndex& idx, const std::string& query, size_t k) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& e : search(idx, tokenize(query), k).entries)
                    out.emplace_back(e.chunk_id, e.score);
                return out;
            },
            py::arg("query"), py::arg("k") = 10)
        .def("save", [](const InvertedIndex& idx,
                        const std::filesystem::path& path) { save_index(idx, path); })
        .def_static("load", [](const std::filesystem::path& path) {
            return load_index(path);
        });

    mod.def(
        "partition",
        [](int k, int m, const std::string& strategy, int first_len,
           double growth, const std::vector<std::pair<int, int>>& boundaries) {
            return partition(k, m, make_scheme(m, strategy, first_len, growth,
                                               boundaries));
        },
        py::arg("k"), py::arg("m"), py::arg("strategy") = "fine_to_coarse",
        py::arg("first_len") = 3, py::arg("growth") = 2.0,
        py::arg("boundaries") = std::vector<std::pair<int, int>>{});

    mod.def(
        "rrf_fuse",
        [](const std::vector<std::vector<std::string>>& rankings, double u) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& e : rrf_fuse(rankings, FusionConfig{u}))
                out.emplace_back(e.chunk_id, e.score);
            return out;
        },
        py::arg("rankings"), py::arg("u") = 40.0);

    mod.def(
        "listnet_loss",
        [](const std::vector<double>& similarities,
           const std::vector<double>& scores, double alpha) {
            return listnet_loss(similarities, scores, alpha);
        },
        py::arg("similarities"), py::arg("scores"), py::arg("alpha") = 1.0);
    mod.def(
        "listmle_loss",
        [](const std::vector<double>& similarities,
           const std::vector<double>& scores) {
            return listmle_loss(similarities, scores);
        },
        py::arg("similarities"), py::arg("scores"));
    mod.def(
        "target_distribution",
        [](const std::vector<double>& scores, double alpha) {
            return target_distribution(scores, alpha);
        },
        py::arg("scores"), py::arg("alpha") = 1.0);

    mod.def(
        "hit_at_k",
        [](const std::vector<std::string>& run,
           const std::set<std::string>& relevant, size_t k) {
            return hit_at_k(run, relevant, k);
        },
        py::arg("run"), py::arg("relevant"), py::arg("k"));
    mod.def(
        "average_precision_at_10",
        [](const std::vector<std::string>& run,
           const std::set<std::string>& relevant) {
            return average_precision_at_10(run, relevant);
        },
        py::arg("run"), py::arg("relevant"));
    mod.def(
        "uniformity",
        [](const std::vector<std::vector<float>>& vectors) {
            return uniformity(vectors);
        },
        py::arg("vectors"));
    mod.def("spearman", &spearman_sts, py::arg("similarities"),
            py::arg("gold_scores"));

    py::class_<ToyEmbedder>(mod, "ToyEmbedder")
        .def(py::init<size_t, uint64_t>(), py::arg("dim") = 256,
             py::arg("seed") = 0)
        .def_property_readonly("dim", &ToyEmbedder::dim)
        .def("embed",
             [](ToyEmbedder& e, const std::string& text) { return e.embed(text); });

    py::class_<Adapter>(mod, "Adapter")
        .def(py::init<size_t>(), py::arg("dim"))
        .def_readonly("d", &Adapter::d)
        .def("apply", &Adapter::apply)
        .def_static("load", [](const std::filesystem::path& path) {
            return load_adapter(path).adapter;
        });

    mod.def(
        "write_fixture",
        [](const std::filesystem::path& dir, int num_docs, int num_queries,
           uint64_t seed) {
            FixtureSpec spec;
            spec.num_docs = num_docs;
            spec.num_eval_queries = num_queries;
            spec.seed = seed;
            write_fixture(generate_jargon_fixture(spec), dir);
        },
        py::arg("dir"), py::arg("num_docs") = 200, py::arg("num_queries") = 60,
        py::arg("seed") = 42);

    mod.def(
        "run_pipeline",
        [](const std::filesystem::path& config_path) {
            PipelineConfig config = load_pipeline_config(config_path);
            RunManifest manifest = run_pipeline(config);
            auto report_dir = emit_report(config, manifest);
            py::dict stages;
            for (const auto& [name, record] : manifest.stages)
                stages[py::str(name)] = py::make_tuple(record.complete,
                                                       record.artifacts);
            py::dict out;
            out["config_hash"] = manifest.config_hash;
            out["tool_version"] = manifest.tool_version;
            out["stages"] = stages;
            out["report_dir"] = report_dir.string();
            return out;
        },
        py::arg("config_path"));
}
