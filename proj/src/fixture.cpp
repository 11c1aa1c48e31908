#include "bmembed/fixture.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bmembed/util.hpp"

namespace bmembed {

namespace {

const std::vector<std::string>& subject_pool() {
    static const std::vector<std::string> pool = {
        "flux",      "manifold",  "gasket",   "rotor",     "solenoid",
        "actuator",  "bearing",   "camshaft", "piston",    "turbine",
        "compressor","nozzle",    "diaphragm","impeller",  "stator",
        "flange",    "coupling",  "spindle",  "gearbox",   "clutch",
        "damper",    "plenum",    "venturi",  "orifice",   "lattice",
        "gantry",    "armature",  "bobbin",   "ferrule",   "grommet",
        "mandrel",   "pawl",      "ratchet",  "sprocket",  "tappet",
        "trunnion",  "volute",    "windlass", "yoke",      "zerk",
        "baffle",    "cowling",   "detent",   "eyelet",    "fairing",
        "gudgeon",   "halyard",   "journal",  "keyway",    "leadscrew"};
    return pool;
}

const std::vector<std::string>& prefix_pool() {
    static const std::vector<std::string> pool = {
        "PHX", "ZRK", "QLM", "VTX", "DRN", "KBS", "MTR", "XEN", "OLV", "PRX",
        "TGN", "UBQ", "WFX", "YND", "CRB", "HSK", "JVL", "NPL", "RDT", "SMV"};
    return pool;
}

std::string designation_of(const std::string& subject) {
    return subject + "ine";
}

std::string platform_alias(const std::string& prefix) {
    return to_lower(prefix) + "core";
}

}  // namespace

Fixture generate_jargon_fixture(const FixtureSpec& spec) {
    if (spec.num_docs < 2)
        throw std::invalid_argument("fixture: need at least two documents");
    const auto& subjects = subject_pool();
    const auto& prefixes = prefix_pool();

    Fixture fixture;
    std::vector<std::vector<std::string>> doc_subjects(spec.num_docs);
    std::vector<std::string> doc_codes(spec.num_docs);
    std::vector<std::string> doc_lead_sentences(spec.num_docs);

    // Assign each document three subjects with a unique (first, second)
    // pair so the codeless evaluation queries stay well posed.
    std::set<std::pair<std::string, std::string>> used_pairs;
    for (int i = 0; i < spec.num_docs; ++i) {
        SplitMix64 rng(mix_seed(spec.seed, static_cast<uint64_t>(i)));
        std::vector<std::string> subs;
        while (true) {
            subs.clear();
            while (subs.size() < 3) {
                const auto& s = subjects[rng.next_below(subjects.size())];
                if (std::find(subs.begin(), subs.end(), s) == subs.end())
                    subs.push_back(s);
            }
            if (used_pairs.insert({subs[0], subs[1]}).second) break;
        }
        doc_subjects[static_cast<size_t>(i)] = subs;
        const std::string prefix = prefixes[static_cast<size_t>(i) % prefixes.size()];
        doc_codes[static_cast<size_t>(i)] = prefix + "-" + std::to_string(100 + i);
    }

    for (int i = 0; i < spec.num_docs; ++i) {
        SplitMix64 rng(mix_seed(mix_seed(spec.seed, 0x71f3u),
                                static_cast<uint64_t>(i)));
        const auto& subs = doc_subjects[static_cast<size_t>(i)];
        const std::string& code = doc_codes[static_cast<size_t>(i)];
        const std::string prefix = code.substr(0, code.find('-'));

        std::ostringstream text;
        // Canonical lead sentence; eval evidence points here.
        std::ostringstream lead;
        lead << "The " << subs[0] << " assembly for unit " << code
             << " requires scheduled calibration of the " << subs[1]
             << " module.";
        doc_lead_sentences[static_cast<size_t>(i)] = lead.str();
        text << lead.str() << ' ';

        text << "Maintenance staff inspect the " << subs[1]
             << " module before each service window on unit " << code << ". ";
        text << "Operating notes for " << code << " list the " << subs[2]
             << " housing as a wear item during routine maintenance. ";
        text << "The " << subs[0] << " assembly tolerances are recorded in the "
             << "service log together with the " << subs[2] << " housing readings. ";
        text << "Field reports indicate that the " << subs[1]
             << " module rarely drifts when the " << subs[0]
             << " assembly is torqued to specification. ";

        // Cross-talk: mention neighbouring documents' first subjects so
        // bag-of-words retrieval sees spurious matches.
        const auto& near = doc_subjects[(static_cast<size_t>(i) + 1) %
                                        static_cast<size_t>(spec.num_docs)];
        const auto& far = doc_subjects[(static_cast<size_t>(i) + 17) %
                                       static_cast<size_t>(spec.num_docs)];
        text << "The " << near[0] << " assembly documentation is cross "
             << "referenced during calibration planning. ";
        text << "Crews trained on the " << far[0]
             << " module follow the same calibration checklist. ";

        // Internal designations: each subject also carries its alias noun,
        // written twice so the alias has weight inside this document.
        for (const auto& s : subs) {
            const std::string d = designation_of(s);
            text << "Internally the " << s << " line is designated " << d
                 << ", and the " << d << " designation appears on all drawings. ";
        }
        const std::string alias = platform_alias(prefix);
        text << "The " << prefix << " platform is registered as " << alias
             << " and " << alias << " entries are tracked in the central registry. ";

        // Every designation and platform alias appears once in every
        // document, so these nouns carry no idf signal corpus-wide.
        {
            std::vector<std::string> commons;
            for (const auto& s : subjects) commons.push_back(designation_of(s));
            for (const auto& p : prefixes) commons.push_back(platform_alias(p));
            size_t emitted = 0;
            while (emitted < commons.size()) {
                text << "Related designations include";
                for (size_t j = 0; j < 10 && emitted < commons.size();
                     ++j, ++emitted)
                    text << (j == 0 ? " " : ", ") << commons[emitted];
                text << ". ";
            }
        }

        // A scattered minority of documents carry the lexicon's substitute
        // nouns, so substituted queries have rare-term decoys to latch onto.
        if (i % 13 == 5)
            text << "Legacy aggregate tuning submodule records are archived "
                 << "with the revision history. ";

        // Variable-length filler so document norms differ.
        const uint64_t filler_count = spec.filler_max > 0
            ? rng.next_below(static_cast<uint64_t>(spec.filler_max) + 1)
            : 0;
        size_t emitted = 0;
        while (emitted < filler_count) {
            text << "Auxiliary readings include";
            for (size_t j = 0; j < 12 && emitted < filler_count; ++j, ++emitted)
                text << (j == 0 ? " " : ", ") << "aux" << rng.next_below(400);
            text << ". ";
        }
        text << "All procedures follow the standard workshop handbook for the "
             << "current revision. ";

        Document doc;
        doc.doc_id = "doc" + std::to_string(i);
        doc.text = text.str();
        fixture.documents.push_back(std::move(doc));
    }

    // Gold evaluation queries over a seeded subset of documents. Queries
    // omit the product code so retrieval has to resolve the subject pair.
    std::vector<size_t> order(static_cast<size_t>(spec.num_docs));
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 qrng(mix_seed(spec.seed, 0xe7a1u));
    for (size_t k = order.size(); k > 1; --k)
        std::swap(order[k - 1], order[qrng.next_below(k)]);
    const size_t n_queries = std::min<size_t>(
        static_cast<size_t>(std::max(spec.num_eval_queries, 0)), order.size());
    for (size_t qi = 0; qi < n_queries; ++qi) {
        const size_t di = order[qi];
        const auto& subs = doc_subjects[di];
        EvalQuery q;
        q.query_id = "eval" + std::to_string(qi);
        std::ostringstream text;
        text << "How does the " << subs[0]
             << " assembly handle calibration for the " << subs[1]
             << " module?";
        q.text = text.str();
        q.gold_spans = {doc_lead_sentences[di]};
        fixture.eval_queries.push_back(std::move(q));
    }

    // Synonym lexicon for the perturbation probes: domain nouns map to
    // their in-corpus designations, codes to aliases, template words to
    // out-of-corpus paraphrases.
    for (const auto& s : subjects)
        fixture.synonym_lexicon[s] = designation_of(s);
    for (const auto& p : prefixes)
        fixture.synonym_lexicon[to_lower(p)] = platform_alias(p);
    for (int i = 0; i < spec.num_docs; ++i)
        fixture.synonym_lexicon[std::to_string(100 + i)] = "registry";
    fixture.synonym_lexicon["assembly"] = "aggregate";
    fixture.synonym_lexicon["calibration"] = "tuning";
    fixture.synonym_lexicon["module"] = "submodule";
    fixture.synonym_lexicon["maintenance"] = "upkeep";
    fixture.synonym_lexicon["unit"] = "apparatus";
    return fixture;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "corpus.jsonl", std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write fixture corpus");
        for (const auto& doc : fixture.documents) {
            nlohmann::json j = {{"id", doc.doc_id}, {"text", doc.text}};
            out << j.dump() << '\n';
        }
    }
    {
        std::ofstream out(dir / "gold.jsonl", std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write fixture gold");
        for (const auto& q : fixture.eval_queries) {
            nlohmann::json j = {{"query_id", q.query_id},
                                {"text", q.text},
                                {"evidence", q.gold_spans}};
            out << j.dump() << '\n';
        }
    }
    {
        nlohmann::json j(fixture.synonym_lexicon);
        write_file(dir / "synonyms.json", j.dump(2) + "\n");
    }
}

std::map<std::string, std::string> load_synonym_lexicon(
    const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    return j.get<std::map<std::string, std::string>>();
}

}  // namespace bmembed
