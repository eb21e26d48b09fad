#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "prunecoder/dataset.hpp"
#include "prunecoder/errors.hpp"
#include "prunecoder/tokenizer.hpp"

using namespace prunecoder;
namespace fs = std::filesystem;

namespace {

constexpr std::int32_t kPad = 0, kUnk = 1, kCls = 2, kSep = 3;

Vocab make_vocab(std::vector<std::string> extra) {
    std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    tokens.insert(tokens.end(), extra.begin(), extra.end());
    return Vocab(std::move(tokens));
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("prunecoder_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

EncodedDataset ten_examples() {
    EncodedDataset d;
    d.max_len = 4;
    for (int i = 0; i < 10; ++i) {
        d.examples.push_back(encode_tokens({4 + i}, 4));
        d.labels.push_back(i % 2);
    }
    d.label_names = {"a", "b"};
    return d;
}

}  // namespace

TEST_CASE("wordpiece greedy longest match") {
    const auto v = make_vocab({"un", "##aff", "##able", "unaffable_not", "hello", "##a", "##ff"});
    CHECK(wordpiece_tokenize("unaffable", v) ==
          std::vector<std::int32_t>{v.find("un"), v.find("##aff"), v.find("##able")});
    CHECK(wordpiece_tokenize("hello", v) == std::vector<std::int32_t>{v.find("hello")});
    CHECK(wordpiece_tokenize("hello unaffable", v).size() == 4);
}

TEST_CASE("wordpiece falls back to a single [UNK] per word") {
    const auto v = make_vocab({"un", "##aff"});
    CHECK(wordpiece_tokenize("unaffz", v) == std::vector<std::int32_t>{kUnk});
    CHECK(wordpiece_tokenize("un xyz un", v) ==
          std::vector<std::int32_t>{v.find("un"), kUnk, v.find("un")});
    CHECK(wordpiece_tokenize("", v).empty());
    CHECK(wordpiece_tokenize("  \t\n ", v).empty());
}

TEST_CASE("wordpiece keeps Devanagari intact and does not fold case") {
    const auto v = make_vocab({"मराठी", "भाषा", "##ला", "Hello"});
    CHECK(wordpiece_tokenize("मराठी भाषाला", v) ==
          std::vector<std::int32_t>{v.find("मराठी"), v.find("भाषा"), v.find("##ला")});
    CHECK(wordpiece_tokenize("Hello", v) == std::vector<std::int32_t>{v.find("Hello")});
    CHECK(wordpiece_tokenize("hello", v) == std::vector<std::int32_t>{kUnk});
    const auto words = split_whitespace("मराठी भाषा  ok");
    REQUIRE(words.size() == 3);
    CHECK(words[0] == "मराठी");
    CHECK(words[1] == "भाषा");
}

TEST_CASE("vocab rejects missing specials and duplicates") {
    CHECK_THROWS_AS(Vocab({"[PAD]", "[UNK]", "[CLS]"}), UsageError);
    CHECK_THROWS_AS(make_vocab({"a", "a"}), UsageError);
    CHECK_THROWS_AS(make_vocab({"a", ""}), UsageError);
    CHECK(make_vocab({"a"}).find("b") == -1);
}

TEST_CASE("specials are located by name, as in hub vocabularies") {
    const Vocab v({"[PAD]", "[unused0]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "un", "##aff"});
    CHECK(v.specials().pad == 0);
    CHECK(v.specials().unk == 2);
    CHECK(v.specials().cls == 3);
    CHECK(v.specials().sep == 4);
    CHECK(wordpiece_tokenize("unaff zz", v) == std::vector<std::int32_t>{6, 7, 2});
    const auto e = encode_example("unaff", v, 6);
    CHECK(e.input_ids == std::vector<std::int32_t>{3, 6, 7, 4, 0, 0});
}

TEST_CASE("vocab file round-trip") {
    const auto dir = scratch_dir("vocab");
    const auto v = make_vocab({"मराठी", "##x", "word"});
    v.save(dir / "vocab.txt");
    const auto back = Vocab::load(dir / "vocab.txt");
    CHECK(back.tokens() == v.tokens());
    write_file(dir / "crlf.txt", "[PAD]\r\n[UNK]\r\n[CLS]\r\n[SEP]\r\nz\r\n");
    CHECK(Vocab::load(dir / "crlf.txt").find("z") == 4);
    fs::remove_all(dir);
}

TEST_CASE("encode_example layout") {
    const auto v = make_vocab({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
    const auto two = encode_example("a b", v, 8);
    CHECK(two.input_ids == std::vector<std::int32_t>{2, 4, 5, 3, 0, 0, 0, 0});
    CHECK(two.attention_mask == std::vector<std::int32_t>{1, 1, 1, 1, 0, 0, 0, 0});

    const auto ten = encode_example("a b c d e f g h i j", v, 8);
    CHECK(ten.input_ids == std::vector<std::int32_t>{2, 4, 5, 6, 7, 8, 9, 3});
    CHECK(ten.attention_mask == std::vector<std::int32_t>(8, 1));

    const auto empty = encode_example("", v, 5);
    CHECK(empty.input_ids == std::vector<std::int32_t>{2, 3, 0, 0, 0});
    CHECK(std::count(empty.attention_mask.begin(), empty.attention_mask.end(), 1) == 2);
}

TEST_CASE("encoding then stripping specials recovers the truncated tokens") {
    const auto v = make_vocab({"a", "b", "c", "##d"});
    for (std::size_t max_len = 2; max_len < 10; ++max_len) {
        const auto tokens = wordpiece_tokenize("a bd c a b", v);
        const auto e = encode_example("a bd c a b", v, max_len);
        std::vector<std::int32_t> body;
        for (std::size_t i = 0; i < max_len; ++i) {
            if (e.attention_mask[i] == 1 && e.input_ids[i] != kCls && e.input_ids[i] != kSep) {
                body.push_back(e.input_ids[i]);
            }
            if (e.attention_mask[i] == 0) CHECK(e.input_ids[i] == kPad);
        }
        const std::size_t keep = std::min(tokens.size(), max_len - 2);
        CHECK(body == std::vector<std::int32_t>(tokens.begin(), tokens.begin() + static_cast<long>(keep)));
        CHECK(e.input_ids[0] == kCls);
    }
}

TEST_CASE("utf8_sequence_length") {
    CHECK(utf8_sequence_length(0x41) == 1);
    CHECK(utf8_sequence_length(0xC3) == 2);
    CHECK(utf8_sequence_length(0xE0) == 3);
    CHECK(utf8_sequence_length(0xF0) == 4);
    CHECK(utf8_sequence_length(0x80) == 0);
}

TEST_CASE("load_dataset maps labels by sorted name") {
    const auto dir = scratch_dir("labels");
    write_file(dir / "d.csv", "text,label\nx,b\ny,a\n\"z, quoted\",a\n");
    const auto d = load_dataset(dir / "d.csv", DataFormat::csv, "text", "label");
    CHECK(d.label_names == std::vector<std::string>{"a", "b"});
    REQUIRE(d.examples.size() == 3);
    CHECK(d.examples[0].label == 1);
    CHECK(d.examples[1].label == 0);
    CHECK(d.examples[2].label == 0);
    CHECK(d.examples[2].text == "z, quoted");

    write_file(dir / "d.jsonl", "{\"text\":\"x\",\"label\":\"b\"}\n{\"text\":\"y\",\"label\":\"a\"}\n\n"
                                 "{\"text\":\"z\",\"label\":\"a\"}\n");
    const auto j = load_dataset(dir / "d.jsonl", DataFormat::jsonl, "text", "label");
    CHECK(j.label_names == d.label_names);
    CHECK(j.examples[0].label == 1);
    CHECK(j.examples[2].text == "z");
    fs::remove_all(dir);
}

TEST_CASE("load_dataset reports the offending line") {
    const auto dir = scratch_dir("errors");
    write_file(dir / "missing.jsonl", "{\"text\":\"x\",\"label\":\"b\"}\n{\"text\":\"y\"}\n");
    try {
        load_dataset(dir / "missing.jsonl", DataFormat::jsonl, "text", "label");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    write_file(dir / "short.csv", "text,label\nx,a\ny\n");
    try {
        load_dataset(dir / "short.csv", DataFormat::csv, "text", "label");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    write_file(dir / "nofield.csv", "body,label\nx,a\n");
    CHECK_THROWS_AS(load_dataset(dir / "nofield.csv", DataFormat::csv, "text", "label"), DataError);
    write_file(dir / "empty.csv", "");
    CHECK_THROWS_AS(load_dataset(dir / "empty.csv", DataFormat::csv, "text", "label"), DataError);
    CHECK_THROWS_AS(load_dataset(dir / "absent.csv", DataFormat::csv, "text", "label"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("load_dataset reuses a given label mapping") {
    const auto dir = scratch_dir("mapping");
    write_file(dir / "v.csv", "text,label\nx,b\n");
    const std::vector<std::string> names{"a", "b", "c"};
    const auto d = load_dataset(dir / "v.csv", DataFormat::csv, "text", "label", Split::validation, &names);
    CHECK(d.examples[0].label == 1);
    CHECK(d.label_names == names);
    write_file(dir / "u.csv", "text,label\nx,z\n");
    CHECK_THROWS_AS(load_dataset(dir / "u.csv", DataFormat::csv, "text", "label", Split::validation, &names),
                    DataError);
    fs::remove_all(dir);
}

TEST_CASE("write_csv round-trips awkward text") {
    const auto dir = scratch_dir("write");
    LabeledDataset d;
    d.label_names = {"neg", "pos"};
    d.examples = {{"plain", 0}, {"comma, inside", 1}, {"quote \" inside", 0}, {"line\nbreak", 1}, {"मराठी", 0}};
    write_csv(dir / "out.csv", d);
    const auto back = load_dataset(dir / "out.csv", DataFormat::csv, "text", "label");
    CHECK(back.label_names == d.label_names);
    REQUIRE(back.examples.size() == d.examples.size());
    for (std::size_t i = 0; i < d.examples.size(); ++i) {
        CHECK(back.examples[i].text == d.examples[i].text);
        CHECK(back.examples[i].label == d.examples[i].label);
    }
    fs::remove_all(dir);
}

TEST_CASE("format helpers") {
    CHECK(format_from_path("a/b.csv") == DataFormat::csv);
    CHECK(format_from_path("a/b.jsonl") == DataFormat::jsonl);
    CHECK(parse_format("jsonl") == DataFormat::jsonl);
    CHECK_THROWS_AS(parse_format("xml"), UsageError);
    CHECK(preset_max_len("shc") == 64);
    CHECK(preset_max_len("lpc") == 256);
    CHECK(preset_max_len("ldc") == 512);
}

TEST_CASE("batches partition the dataset") {
    const auto d = ten_examples();
    const auto plain = batches(d, 4, 1, 0, false);
    REQUIRE(plain.size() == 3);
    CHECK(plain[0].labels.size() == 4);
    CHECK(plain[1].labels.size() == 4);
    CHECK(plain[2].labels.size() == 2);
    CHECK(plain[0].input_ids.shape() == Shape{4, 4});
    CHECK(plain[0].input_ids.at(1, 1) == 5);

    CHECK(epoch_order(10, 7, 0, false) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(epoch_order(10, 7, 2, true) == epoch_order(10, 7, 2, true));
    CHECK_FALSE(epoch_order(10, 7, 2, true) == epoch_order(10, 7, 3, true));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto order = epoch_order(10, seed, 1, true);
        std::sort(order.begin(), order.end());
        CHECK(order == epoch_order(10, 0, 0, false));
    }
}

TEST_CASE("marker task is seeded and balanced enough") {
    const MarkerTask task;
    const auto a = generate_marker_dataset(task, 400, 3);
    const auto b = generate_marker_dataset(task, 400, 3);
    REQUIRE(a.examples.size() == 400);
    std::set<int> labels;
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].text == b.examples[i].text);
        labels.insert(a.examples[i].label);
    }
    CHECK(labels.size() == 4);
    const auto v = marker_task_vocab(task);
    for (const auto& e : a.examples) {
        for (auto id : wordpiece_tokenize(e.text, v)) CHECK(id != kUnk);
    }
}
