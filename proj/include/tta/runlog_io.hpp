#pragma once

// On-disk form of a RunLog, split in two files:
//
// runlog.jsonl: first line is a header object
//   {"schema":"tta.runlog","version":1,"aborted":bool,"failed_step":int,"error":string}
// followed by one object per batch, in stream order:
//   {"step","domain","round","skipped","n","loss","num_selected","updated","update_norm"}
//
// samples.csv: first line "# tta.samples v1", second line the column header
//   step,label,open,c_o,c_a,selected,conf_tilde,conf_hat,logit_tilde,logit_hat,
//   max_prob_hat,entropy_hat,max_logit_hat,energy_hat
// then one row per sample. Reals are printed with 10 significant digits.

#include <filesystem>
#include <iosfwd>

#include "tta/adapt.hpp"

namespace tta {

inline constexpr int kRunLogVersion = 1;
inline constexpr int kSamplesVersion = 1;

void write_runlog_jsonl(const RunLog& log, std::ostream& out);
void write_samples_csv(const RunLog& log, std::ostream& out);

// Step metadata only; samples stay empty.
RunLog read_runlog_jsonl(std::istream& in);

// Attaches samples read from the CSV to the steps of `log` (matched by step).
void read_samples_csv(std::istream& in, RunLog& log);

void save_runlog(const RunLog& log, const std::filesystem::path& jsonl,
                 const std::filesystem::path& samples_csv);
RunLog load_runlog(const std::filesystem::path& jsonl, const std::filesystem::path& samples_csv);

}  // namespace tta
