#pragma once

// Trace replay harness: parse or generate operation traces, run them against
// a structure and a host-arithmetic reference set in lockstep, and report
// instruction counts, space and any divergence.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uwram/machine.hpp"

namespace uwram {

enum class OpKind { kInsert, kDelete, kPred, kMember, kPMember };
inline constexpr std::array<const char*, 5> kOpNames = {
    "insert", "delete", "pred", "member", "pmember"};

struct TraceOp {
  OpKind kind;
  std::vector<word_t> operands;  // one value; K values for pmember
};

struct TraceParseError : std::runtime_error {
  TraceParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line(line) {}
  std::size_t line;
};

// Lines of `<op> <value...>`, values decimal or binary with a 0b prefix;
// blank lines and lines starting with '#' are skipped.
std::vector<TraceOp> parse_trace(std::istream& in, const MachineConfig& cfg);
void write_trace(std::ostream& out, const std::vector<TraceOp>& trace);

enum class StructureKind { kPDict, kXtrie, kXtrieEps };
enum class Profile { kUniform, kClustered, kSorted, kAdversarialDense };

std::optional<Profile> profile_from_name(const std::string& name);
const char* profile_name(Profile p);

// Deterministic trace for (config, structure, profile, n, seed). The key
// pool is sized to the machine's address space so the structure under test
// stays within the model's w-bit pointer reach.
std::vector<TraceOp> gen_trace(const MachineConfig& cfg, StructureKind target,
                               Profile profile, std::size_t n,
                               std::uint64_t seed);

// Brute-force ground truth over a plain sorted sequence.
std::optional<word_t> oracle_predecessor(const std::vector<word_t>& sorted,
                                         word_t x);
bool oracle_member(const std::vector<word_t>& sorted, word_t x);

struct Mismatch {
  std::size_t op_index = 0;
  std::string expected, got;
};

struct RunReport {
  std::string structure;
  unsigned w = 0, lanes = 0;
  unsigned eps_num = 1, eps_den = 1;
  std::uint64_t seed = 0;
  bool validate = false;
  addr_t arena_capacity = 0;

  std::array<std::uint64_t, 5> op_counts{};
  std::uint64_t mismatch_count = 0;
  std::vector<Mismatch> first_mismatches;  // up to 8
  std::uint64_t peak_arena_words = 0;
  std::uint64_t final_size = 0;

  struct KindCost {
    std::uint64_t count = 0;
    CostCounters sum, max;
  };
  std::array<KindCost, 5> costs{};

  void write_text(std::ostream& os) const;
  void write_json_lines(std::ostream& os) const;
};

struct RunOptions {
  // Structural scans against the reference set every `scan_period` ops
  // (requires the structure to expose check_invariants).
  bool scan = false;
  std::size_t scan_period = 251;
};

namespace trace_detail {

void record_mismatch(RunReport& r, std::size_t index,
                     const std::string& expected, const std::string& got);

inline std::string show(std::optional<word_t> v) {
  return v ? std::to_string(*v) : "none";
}

}  // namespace trace_detail

// Replays a trace against the structure and a std::set reference. S needs
// insert/erase/size plus either predecessor (tries) or contains/pmember
// (dictionaries); `member` on a predecessor structure means pred(x) == x.
template <class S>
RunReport run_trace(Machine& m, S& s, const std::vector<TraceOp>& trace,
                    std::uint64_t seed, const std::string& structure_name,
                    const RunOptions& opt = {}) {
  RunReport r;
  const MachineConfig& cfg = m.config();
  r.structure = structure_name;
  r.w = cfg.word_bits;
  r.lanes = cfg.lanes;
  r.eps_num = cfg.eps_num;
  r.eps_den = cfg.eps_den;
  r.seed = seed;
  r.validate = cfg.validate;
  r.arena_capacity = cfg.arena_capacity;

  std::set<word_t> oracle;
  auto sorted_oracle = [&]() {
    return std::vector<word_t>(oracle.begin(), oracle.end());
  };

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceOp& op = trace[i];
    const std::size_t kind = static_cast<std::size_t>(op.kind);
    ++r.op_counts[kind];
    CostCounters before = m.counters();
    switch (op.kind) {
      case OpKind::kInsert:
        s.insert(op.operands[0]);
        oracle.insert(op.operands[0]);
        if (s.size() != oracle.size())
          trace_detail::record_mismatch(r, i,
                                        std::to_string(oracle.size()),
                                        std::to_string(s.size()));
        break;
      case OpKind::kDelete:
        s.erase(op.operands[0]);
        oracle.erase(op.operands[0]);
        if (s.size() != oracle.size())
          trace_detail::record_mismatch(r, i,
                                        std::to_string(oracle.size()),
                                        std::to_string(s.size()));
        break;
      case OpKind::kPred: {
        if constexpr (requires { s.predecessor(word_t{}); }) {
          std::optional<word_t> got = s.predecessor(op.operands[0]);
          auto it = oracle.upper_bound(op.operands[0]);
          std::optional<word_t> want;
          if (it != oracle.begin()) want = *std::prev(it);
          if (got != want)
            trace_detail::record_mismatch(r, i, trace_detail::show(want),
                                          trace_detail::show(got));
        } else {
          throw UsageError("structure does not answer pred");
        }
        break;
      }
      case OpKind::kMember: {
        bool want = oracle.count(op.operands[0]) != 0;
        bool got;
        if constexpr (requires { s.contains(word_t{}); }) {
          got = s.contains(op.operands[0]);
        } else {
          got = s.predecessor(op.operands[0]) ==
                std::optional<word_t>(op.operands[0]);
        }
        if (got != want)
          trace_detail::record_mismatch(r, i, want ? "true" : "false",
                                        got ? "true" : "false");
        break;
      }
      case OpKind::kPMember: {
        if constexpr (requires(const Ultraword& u) { s.pmember(u); }) {
          Ultraword probe = Ultraword::from_lanes(cfg, op.operands);
          Ultraword got = s.pmember(probe);
          for (unsigned lane = 0; lane < cfg.lanes; ++lane) {
            word_t want = oracle.count(op.operands[lane]) ? 1 : 0;
            if (got.lane(lane) != want) {
              trace_detail::record_mismatch(
                  r, i, "lane " + std::to_string(lane) + "=" +
                            std::to_string(want),
                  std::to_string(got.lane(lane)));
              break;
            }
          }
        } else {
          throw UsageError("structure does not answer pmember");
        }
        break;
      }
    }
    CostCounters delta = m.counters() - before;
    RunReport::KindCost& kc = r.costs[kind];
    ++kc.count;
    kc.sum.word_ops += delta.word_ops;
    kc.sum.ultra_ops += delta.ultra_ops;
    kc.sum.scattered_reads += delta.scattered_reads;
    kc.sum.scattered_writes += delta.scattered_writes;
    kc.sum.contiguous_accesses += delta.contiguous_accesses;
    kc.max.word_ops = std::max(kc.max.word_ops, delta.word_ops);
    kc.max.ultra_ops = std::max(kc.max.ultra_ops, delta.ultra_ops);
    kc.max.scattered_reads =
        std::max(kc.max.scattered_reads, delta.scattered_reads);
    kc.max.scattered_writes =
        std::max(kc.max.scattered_writes, delta.scattered_writes);
    kc.max.contiguous_accesses =
        std::max(kc.max.contiguous_accesses, delta.contiguous_accesses);

    if (opt.scan && (i % opt.scan_period == opt.scan_period - 1 ||
                     i + 1 == trace.size())) {
      if constexpr (requires(const std::vector<word_t>& v) {
                      s.check_invariants(v);
                    }) {
        s.check_invariants(sorted_oracle());
      } else if constexpr (requires { s.check_invariants(); }) {
        s.check_invariants();
      }
    }
  }
  r.peak_arena_words = m.peak_allocated_words();
  r.final_size = s.size();
  return r;
}

}  // namespace uwram
