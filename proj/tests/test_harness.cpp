#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <optional>
#include <sstream>

#include "uwram/pdict.hpp"
#include "uwram/trace.hpp"
#include "uwram/xtrie.hpp"
#include "uwram/xtrie_eps.hpp"

using namespace uwram;

namespace {

MachineConfig cfg16() {
  return MachineConfig::full_width(16, (word_t{1} << 16) - 1);
}

// Answers predecessor queries one too low every time.
struct SkewedStub {
  std::set<word_t> s;
  std::size_t size() const { return s.size(); }
  void insert(word_t x) { s.insert(x); }
  void erase(word_t x) { s.erase(x); }
  std::optional<word_t> predecessor(word_t x) {
    auto it = s.upper_bound(x);
    if (it == s.begin()) return std::nullopt;
    word_t v = *std::prev(it);
    return v == 0 ? std::optional<word_t>() : std::optional<word_t>(v - 1);
  }
};

}  // namespace

TEST_CASE("trace parsing: values, binary literals, errors with line numbers") {
  MachineConfig cfg = cfg16();
  std::istringstream good(
      "# a comment\n"
      "\n"
      "insert 17\n"
      "pred 0b10001\n"
      "delete 17\n"
      "member 3\n");
  std::vector<TraceOp> ops = parse_trace(good, cfg);
  REQUIRE(ops.size() == 4);
  CHECK(ops[0].kind == OpKind::kInsert);
  CHECK(ops[1].kind == OpKind::kPred);
  CHECK(ops[1].operands[0] == 17);
  CHECK(ops[3].operands[0] == 3);

  std::istringstream bad_op("insert 1\nfrobnicate 2\n");
  CHECK_THROWS_WITH_AS(parse_trace(bad_op, cfg),
                       "line 2: unknown operation 'frobnicate'",
                       TraceParseError);

  std::istringstream too_big("insert 70000\n");
  CHECK_THROWS_AS(parse_trace(too_big, cfg), TraceParseError);

  std::istringstream wrong_arity("pmember 1 2 3\n");
  CHECK_THROWS_AS(parse_trace(wrong_arity, cfg), TraceParseError);

  std::istringstream bad_digit("insert 0b102\n");
  CHECK_THROWS_AS(parse_trace(bad_digit, cfg), TraceParseError);
}

TEST_CASE("trace round-trips through its text form") {
  MachineConfig cfg = cfg16();
  std::vector<TraceOp> trace =
      gen_trace(cfg, StructureKind::kPDict, Profile::kUniform, 500, 9);
  std::ostringstream out;
  write_trace(out, trace);
  std::istringstream in(out.str());
  std::vector<TraceOp> back = parse_trace(in, cfg);
  REQUIRE(back.size() == trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(back[i].kind == trace[i].kind);
    CHECK(back[i].operands == trace[i].operands);
  }
}

TEST_CASE("generation is deterministic in the seed and sized exactly") {
  MachineConfig cfg = cfg16();
  for (Profile p : {Profile::kUniform, Profile::kClustered, Profile::kSorted,
                    Profile::kAdversarialDense}) {
    std::vector<TraceOp> a =
        gen_trace(cfg, StructureKind::kXtrie, p, 1000, 77);
    std::vector<TraceOp> b =
        gen_trace(cfg, StructureKind::kXtrie, p, 1000, 77);
    std::vector<TraceOp> c =
        gen_trace(cfg, StructureKind::kXtrie, p, 1000, 78);
    REQUIRE(a.size() == 1000);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      same = same && a[i].kind == b[i].kind && a[i].operands == b[i].operands;
      differs = differs || a[i].kind != c[i].kind ||
                a[i].operands != c[i].operands;
    }
    CHECK(same);
    CHECK(differs);
  }
}

TEST_CASE("oracle helpers") {
  std::vector<word_t> sorted = {3, 9, 40};
  CHECK(oracle_predecessor(sorted, 2) == std::nullopt);
  CHECK(oracle_predecessor(sorted, 3) == word_t{3});
  CHECK(oracle_predecessor(sorted, 39) == word_t{9});
  CHECK(oracle_member(sorted, 9));
  CHECK_FALSE(oracle_member(sorted, 10));
  CHECK(oracle_predecessor({}, 5) == std::nullopt);
}

TEST_CASE("empty trace produces an empty, passing report") {
  Machine m(cfg16());
  PredecessorSet s(m, 1);
  RunReport r = run_trace(m, s, {}, 1, "xtrie");
  CHECK(r.mismatch_count == 0);
  std::uint64_t total = 0;
  for (auto c : r.op_counts) total += c;
  CHECK(total == 0);
}

TEST_CASE("the worked-example trace passes through the harness") {
  std::istringstream text(
      "insert 0b001000\ninsert 0b001010\ninsert 0b001011\n"
      "insert 0b101000\ninsert 0b101010\ninsert 0b110110\n"
      "insert 0b110111\ninsert 0b111100\n"
      "pred 0b110101\n"
      "insert 0b110101\n"
      "pred 0b110101\n");
  MachineConfig cfg = cfg16();
  std::vector<TraceOp> trace = parse_trace(text, cfg);
  Machine m(cfg);
  PredecessorSet s(m, 5);
  RunReport r = run_trace(m, s, trace, 5, "xtrie");
  CHECK(r.mismatch_count == 0);
  // And explicitly: the two queries answer 101010 then the key itself.
  CHECK(s.predecessor(0b110101) == word_t{0b110101});
  s.erase(0b110101);
  CHECK(s.predecessor(0b110101) == word_t{0b101010});
}

TEST_CASE("a diverging structure is caught and reported") {
  Machine m(cfg16());
  SkewedStub stub;
  std::vector<TraceOp> trace = {
      {OpKind::kInsert, {100}},
      {OpKind::kPred, {150}},
  };
  RunReport r = run_trace(m, stub, trace, 3, "stub");
  CHECK(r.mismatch_count == 1);
  REQUIRE(r.first_mismatches.size() == 1);
  CHECK(r.first_mismatches[0].op_index == 1);
  CHECK(r.first_mismatches[0].expected == "100");
  CHECK(r.first_mismatches[0].got == "99");
}

TEST_CASE("replayed runs produce byte-identical reports") {
  MachineConfig cfg = cfg16();
  std::vector<TraceOp> trace =
      gen_trace(cfg, StructureKind::kXtrie, Profile::kUniform, 3000, 11);
  auto run_once = [&]() {
    Machine m(cfg);
    PredecessorSet s(m, 11);
    RunReport r = run_trace(m, s, trace, 11, "xtrie");
    std::ostringstream os;
    r.write_text(os);
    std::ostringstream js;
    r.write_json_lines(js);
    return os.str() + "\x1e" + js.str();
  };
  std::string a = run_once(), b = run_once();
  CHECK(a == b);
  CHECK(a.find("mismatches: 0") != std::string::npos);
}

TEST_CASE("run_trace drives the dictionary including packed probes") {
  MachineConfig cfg = cfg16();
  std::vector<TraceOp> trace =
      gen_trace(cfg, StructureKind::kPDict, Profile::kUniform, 4000, 21);
  bool has_pmember = false;
  for (const TraceOp& op : trace)
    has_pmember = has_pmember || op.kind == OpKind::kPMember;
  CHECK(has_pmember);
  Machine m(cfg);
  ParallelDict d(m, 21, true);
  RunOptions opt;
  opt.scan = true;
  RunReport r = run_trace(m, d, trace, 21, "pdict", opt);
  CHECK(r.mismatch_count == 0);
  CHECK(r.op_counts[static_cast<std::size_t>(OpKind::kPMember)] > 0);
}

TEST_CASE("run_trace drives the bucketed structure with scans") {
  MachineConfig cfg = MachineConfig::narrow(16, 1, 2, (word_t{1} << 16) - 1);
  std::vector<TraceOp> trace =
      gen_trace(cfg, StructureKind::kXtrieEps, Profile::kClustered, 4000, 31);
  Machine m(cfg);
  BucketedPredecessor s(m, 31);
  RunOptions opt;
  opt.scan = true;
  RunReport r = run_trace(m, s, trace, 31, "xtrie-eps", opt);
  CHECK(r.mismatch_count == 0);
  CHECK(s.max_rounds_seen() <= s.round_bound());
  // Clustered inserts at this volume force at least one bucket split.
  CHECK(s.split_count() >= 1);
}

TEST_CASE("pred on the dictionary is a usage error") {
  Machine m(cfg16());
  ParallelDict d(m, 1, false);
  std::vector<TraceOp> trace = {{OpKind::kPred, {4}}};
  CHECK_THROWS_AS(run_trace(m, d, trace, 1, "pdict"), UsageError);
}
