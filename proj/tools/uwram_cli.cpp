// Trace replay driver: runs generated or recorded operation traces against
// one of the structures with a host-side reference set, and reports per-op
// instruction counts and arena usage.
//
// Exit codes: 0 all reference checks passed, 1 divergence, 2 usage or parse
// error.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "uwram/pdict.hpp"
#include "uwram/trace.hpp"
#include "uwram/xtrie.hpp"
#include "uwram/xtrie_eps.hpp"

namespace {

using namespace uwram;

struct CommonArgs {
  std::string structure = "xtrie";
  unsigned w = 64;
  std::string epsilon = "1/1";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

bool parse_epsilon(const std::string& text, unsigned& p, unsigned& q) {
  std::size_t slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      p = std::stoul(text);
      q = 1;
    } else {
      p = std::stoul(text.substr(0, slash));
      q = std::stoul(text.substr(slash + 1));
    }
  } catch (const std::exception&) {
    return false;
  }
  return p >= 1 && q >= 1 && p <= q;
}

std::optional<StructureKind> structure_from_name(const std::string& s) {
  if (s == "pdict") return StructureKind::kPDict;
  if (s == "xtrie") return StructureKind::kXtrie;
  if (s == "xtrie-eps") return StructureKind::kXtrieEps;
  return std::nullopt;
}

addr_t default_arena_words(unsigned w) {
  if (w >= 32) return addr_t{1} << 24;
  return (addr_t{1} << w) - 1;
}

std::uint64_t seed_from_env() {
  const char* env = std::getenv("UWRAM_SEED");
  if (env == nullptr) return 0;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    return 0;
  }
}

// The dictionary answers member queries; the tries answer predecessor.
// run_trace resolves which ops a structure supports.
template <class S>
int run_and_report(Machine& m, S& s, const std::vector<TraceOp>& trace,
                   const CommonArgs& args, const RunOptions& opt,
                   const std::string& report_path,
                   const std::string& format) {
  auto t0 = std::chrono::steady_clock::now();
  RunReport report = run_trace(m, s, trace, args.seed, args.structure, opt);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!report_path.empty()) {
    file.open(report_path);
    if (!file) {
      std::cerr << "cannot open report file " << report_path << "\n";
      return 2;
    }
    os = &file;
  }
  if (format == "json-lines")
    report.write_json_lines(*os);
  else
    report.write_text(*os);
  // Informational only; kept out of the report so replays stay byte-equal.
  std::cerr << "wall_ms: " << ms << "\n";
  return report.mismatch_count == 0 ? 0 : 1;
}

int cmd_run(const CommonArgs& args, const std::string& trace_path,
            const std::string& gen_profile, std::size_t gen_n, bool validate,
            addr_t arena_words, const std::string& report_path,
            const std::string& format) {
  unsigned p = 1, q = 1;
  if (!parse_epsilon(args.epsilon, p, q)) {
    std::cerr << "bad --epsilon (want p/q with 0 < p <= q)\n";
    return 2;
  }
  std::optional<StructureKind> kind = structure_from_name(args.structure);
  if (!kind) {
    std::cerr << "unknown structure " << args.structure << "\n";
    return 2;
  }
  if (arena_words == 0) arena_words = default_arena_words(args.w);

  MachineConfig cfg =
      *kind == StructureKind::kXtrie
          ? MachineConfig::full_width(args.w, arena_words, validate)
          : MachineConfig::narrow(args.w, p, q, arena_words, validate);
  Machine m(cfg);

  std::vector<TraceOp> trace;
  try {
    if (!trace_path.empty()) {
      std::ifstream in(trace_path);
      if (!in) {
        std::cerr << "cannot open trace file " << trace_path << "\n";
        return 2;
      }
      trace = parse_trace(in, cfg);
    } else {
      std::optional<Profile> profile = profile_from_name(gen_profile);
      if (!profile) {
        std::cerr << "unknown profile " << gen_profile << "\n";
        return 2;
      }
      trace = gen_trace(cfg, *kind, *profile, gen_n, args.seed);
    }
  } catch (const TraceParseError& e) {
    std::cerr << "trace parse error: " << e.what() << "\n";
    return 2;
  }

  RunOptions opt;
  opt.scan = validate;
  try {
    switch (*kind) {
      case StructureKind::kPDict: {
        ParallelDict d(m, args.seed, true);
        return run_and_report(m, d, trace, args, opt, report_path, format);
      }
      case StructureKind::kXtrie: {
        PredecessorSet s(m, args.seed);
        return run_and_report(m, s, trace, args, opt, report_path, format);
      }
      case StructureKind::kXtrieEps: {
        BucketedPredecessor s(m, args.seed);
        return run_and_report(m, s, trace, args, opt, report_path, format);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

int cmd_gen(const CommonArgs& args, const std::string& profile_name_arg,
            std::size_t n, const std::string& out_path) {
  unsigned p = 1, q = 1;
  if (!parse_epsilon(args.epsilon, p, q)) {
    std::cerr << "bad --epsilon (want p/q with 0 < p <= q)\n";
    return 2;
  }
  std::optional<StructureKind> kind = structure_from_name(args.structure);
  if (!kind) {
    std::cerr << "unknown structure " << args.structure << "\n";
    return 2;
  }
  std::optional<Profile> profile = profile_from_name(profile_name_arg);
  if (!profile) {
    std::cerr << "unknown profile " << profile_name_arg << "\n";
    return 2;
  }
  MachineConfig cfg = *kind == StructureKind::kXtrie
                          ? MachineConfig::full_width(
                                args.w, default_arena_words(args.w), false)
                          : MachineConfig::narrow(
                                args.w, p, q, default_arena_words(args.w),
                                false);
  std::vector<TraceOp> trace = gen_trace(cfg, *kind, *profile, n, args.seed);
  if (out_path.empty()) {
    write_trace(std::cout, trace);
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot open output file " << out_path << "\n";
      return 2;
    }
    write_trace(out, trace);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ultra-wide word RAM structures: trace replay and checking"};
  app.require_subcommand(1);

  CommonArgs args;
  args.seed = seed_from_env();

  std::string trace_path, gen_profile, report_path, out_path;
  std::string format = "text";
  std::size_t gen_n = 0;
  bool validate = false;
  addr_t arena_words = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--structure", args.structure,
                    "pdict | xtrie | xtrie-eps");
    cmd->add_option("--w", args.w, "word width in bits")
        ->check(CLI::IsMember({8, 16, 32, 64}));
    cmd->add_option("--epsilon", args.epsilon,
                    "lane exponent p/q (K ~ w^(p/q); pdict and xtrie-eps)");
    cmd->add_option("--seed", args.seed, "RNG seed (default $UWRAM_SEED)");
  };

  CLI::App* run = app.add_subcommand("run", "replay a trace and check answers");
  add_common(run);
  auto* topt = run->add_option("--trace", trace_path, "trace file to replay");
  auto* gopt = run->add_option(
      "--gen", gen_profile,
      "generate: uniform | clustered | sorted | adversarial-dense");
  run->add_option("--n", gen_n, "generated op count");
  run->add_flag("--validate", validate,
                "precondition checks plus periodic structural scans");
  run->add_option("--arena-words", arena_words,
                  "simulated memory limit in words (default per w)");
  run->add_option("--report", report_path, "write the report here");
  run->add_option("--format", format, "text | json-lines")
      ->check(CLI::IsMember({"text", "json-lines"}));
  topt->excludes(gopt);

  CLI::App* gen = app.add_subcommand("gen", "emit a deterministic trace");
  add_common(gen);
  gen->add_option("--profile", gen_profile,
                  "uniform | clustered | sorted | adversarial-dense")
      ->required();
  gen->add_option("--n", gen_n, "op count")->required();
  gen->add_option("-o,--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) {
    if (trace_path.empty() && gen_profile.empty()) {
      std::cerr << "run needs --trace FILE or --gen PROFILE --n COUNT\n";
      return 2;
    }
    if (!gen_profile.empty() && gen_n == 0) {
      std::cerr << "--gen needs --n COUNT\n";
      return 2;
    }
    return cmd_run(args, trace_path, gen_profile, gen_n, validate,
                   arena_words, report_path, format);
  }
  return cmd_gen(args, gen_profile, gen_n, out_path);
}
