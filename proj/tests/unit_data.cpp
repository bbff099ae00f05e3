#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "clipit/config.hpp"
#include "clipit/data.hpp"
#include "clipit/rng.hpp"

using namespace clipit;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

EmbeddingStore sample_store() {
    EmbeddingStore s;
    s.data = Matrix(3, 2);
    s.data(0, 0) = 1.5;
    s.data(0, 1) = -2.25;
    s.data(1, 0) = 0.125;
    s.data(1, 1) = 4.0;
    s.data(2, 0) = -0.5;
    s.data(2, 1) = 3.75;
    s.labels = {0, 1, 1};
    s.ids = {"a", "b", "c"};
    return s;
}

}  // namespace

TEST_CASE("embedding store round-trips through CIPE") {
    const auto path = temp_path("clipit_store.cipe");
    EmbeddingStore s = sample_store();
    save_embeddings(s, path.string());
    const EmbeddingStore t = load_embeddings(path.string());
    CHECK(t.count() == 3);
    CHECK(t.dim() == 2);
    CHECK(t.data.bit_equal(s.data));  // values chosen float-exact
    CHECK(t.labels == s.labels);
    CHECK(t.ids == s.ids);

    // save(load(x)) reproduces the file byte for byte
    const auto path2 = temp_path("clipit_store2.cipe");
    save_embeddings(t, path2.string());
    CHECK(detail::read_file(path.string()) == detail::read_file(path2.string()));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("float widening round-trip is exact for arbitrary values") {
    Rng rng(99);
    EmbeddingStore s;
    s.data = Matrix(16, 5);
    for (std::size_t i = 0; i < s.data.size(); ++i)
        s.data[i] = static_cast<double>(static_cast<float>(rng.next_gaussian() * 12.3));
    const auto path = temp_path("clipit_store3.cipe");
    save_embeddings(s, path.string());
    const EmbeddingStore t = load_embeddings(path.string());
    CHECK(t.data.bit_equal(s.data));
    std::filesystem::remove(path);
}

TEST_CASE("CIPE rejects bad magic, version and truncation") {
    const auto path = temp_path("clipit_bad.cipe");
    EmbeddingStore s = sample_store();
    save_embeddings(s, path.string());
    std::string buf = detail::read_file(path.string());

    std::string evil = buf;
    evil[0] = 'X';
    detail::write_file(path.string(), evil);
    CHECK_THROWS_AS(load_embeddings(path.string()), BadMagicError);

    evil = buf;
    evil[4] = 9;  // version
    detail::write_file(path.string(), evil);
    CHECK_THROWS_AS(load_embeddings(path.string()), UnsupportedVersionError);

    // declared N = 3 but rows missing
    evil = buf.substr(0, buf.size() - 12);
    detail::write_file(path.string(), evil);
    CHECK_THROWS_AS(load_embeddings(path.string()), TruncatedFileError);

    evil = buf + "zz";
    detail::write_file(path.string(), evil);
    CHECK_THROWS_AS(load_embeddings(path.string()), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("store invariants are enforced on save") {
    EmbeddingStore s = sample_store();
    s.labels = {0, 1};
    CHECK_THROWS_AS(save_embeddings(s, temp_path("x.cipe").string()),
                    LabelLengthMismatchError);
    s = sample_store();
    s.ids = {"a", "a", "c"};
    CHECK_THROWS_AS(save_embeddings(s, temp_path("x.cipe").string()), DuplicateIdError);
    s = sample_store();
    s.data(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(save_embeddings(s, temp_path("x.cipe").string()), NonFiniteInputError);
}

TEST_CASE("corpus loads in order, lowercases tags, rejects bad lines") {
    const auto path = temp_path("clipit_corpus.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"r1","text":"invasive carcinoma seen","tags":["Breast"]})" << "\n";
        out << R"({"id":"r2","text":"normal colon mucosa","tags":["colorectal"]})" << "\n";
    }
    TextCorpus c = load_corpus(path.string());
    REQUIRE(c.size() == 2);
    CHECK(c.records[0].id == "r1");
    CHECK(c.records[0].tags[0] == "breast");
    CHECK(c.records[1].id == "r2");

    {
        std::ofstream out(path);
        out << R"({"id":"r1","tags":[]})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(path.string()), MalformedLineError);

    {
        std::ofstream out(path);
        out << R"({"id":"r1","text":"ok"})" << "\n"
            << R"({"id":"r1","text":"dup"})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(path.string()), DuplicateIdError);

    {
        std::ofstream out(path);
        out << R"({"id":"r1","text":"   "})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(path.string()), EmptyTextError);
    std::filesystem::remove(path);
}

TEST_CASE("corpus save/load round trip preserves order and count") {
    TextCorpus c;
    c.records.push_back({"a", "first report text", {"breast"}});
    c.records.push_back({"b", "second report text", {"colorectal", "colon"}});
    const auto path = temp_path("clipit_corpus2.jsonl");
    save_corpus(c, path.string());
    TextCorpus d = load_corpus(path.string());
    REQUIRE(d.size() == 2);
    CHECK(d.records[0].id == "a");
    CHECK(d.records[1].tags == std::vector<std::string>{"colorectal", "colon"});
    std::filesystem::remove(path);
}

TEST_CASE("filter_corpus keeps matches, preserves order, is idempotent") {
    TextCorpus c;
    c.records.push_back({"a", "ductal tissue", {"breast"}});
    c.records.push_back({"b", "colon mucosa", {"colorectal"}});
    c.records.push_back({"c", "lobular BREAST lesion", {}});

    const TextCorpus f = filter_corpus(c, {"breast"});
    REQUIRE(f.size() == 2);
    CHECK(f.records[0].id == "a");
    CHECK(f.records[1].id == "c");

    const TextCorpus ff = filter_corpus(f, {"breast"});
    CHECK(ff.size() == f.size());

    const TextCorpus all = filter_corpus(c, {"breast", "colorectal"});
    CHECK(all.size() == 3);

    CHECK_THROWS_AS(filter_corpus(c, {"pancreas"}), EmptyFilterResultError);
    CHECK_THROWS_AS(filter_corpus(c, {}), ConfigInvalidError);
}

TEST_CASE("pairing dataset round trip and validation") {
    PseudoPairedDataset p;
    p.records.push_back({0, "r1", 1, 0.75});
    p.records.push_back({1, "r2", 0, -0.25});
    const auto path = temp_path("clipit_pairs.jsonl");
    save_pairs(p, path.string());
    const PseudoPairedDataset q = load_pairs(path.string());
    REQUIRE(q.size() == 2);
    CHECK(q.records[1].text_id == "r2");
    CHECK(q.records[1].similarity == -0.25);

    PseudoPairedDataset bad;
    bad.records.push_back({1, "r1", 0, 0.0});
    CHECK_THROWS_AS(bad.validate(), InstanceMismatchError);
    std::filesystem::remove(path);
}

TEST_CASE("flat TOML config: types, arrays, comments, precedence sources") {
    const auto path = std::filesystem::temp_directory_path() / "clipit_cfg.toml";
    {
        std::ofstream out(path);
        out << "# training setup\n"
            << "[training]\n"
            << "lr = 0.005\n"
            << "batch_size = 32\n"
            << "variant = \"early_fusion\"  # quoted string\n"
            << "freeze_text = true\n"
            << "keywords = [\"breast\", \"colorectal\"]\n";
    }
    const ConfigFile cfg = ConfigFile::parse_file(path.string());
    CHECK(cfg.get_double("lr", 0.0) == 0.005);
    CHECK(cfg.get_u64("batch_size", 0) == 32);
    CHECK(cfg.get_string("variant", "") == "early_fusion");
    CHECK(cfg.get_bool("freeze_text", false));
    CHECK(cfg.get_string_array("keywords", {}) ==
          std::vector<std::string>{"breast", "colorectal"});
    CHECK(cfg.get_double("missing", 7.5) == 7.5);
    CHECK_FALSE(cfg.has("lambda"));

    {
        std::ofstream out(path);
        out << "this line has no equals sign\n";
    }
    CHECK_THROWS_AS(ConfigFile::parse_file(path.string()), MalformedLineError);

    {
        std::ofstream out(path);
        out << "lr = abc\n";
    }
    CHECK_THROWS_AS(ConfigFile::parse_file(path.string()).get_double("lr", 0.0),
                    ConfigInvalidError);
    std::filesystem::remove(path);
}
