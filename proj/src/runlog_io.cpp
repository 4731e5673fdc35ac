#include "tta/runlog_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tta/error.hpp"

namespace tta {

namespace {

using nlohmann::json;

constexpr const char* kRunLogSchema = "tta.runlog";
constexpr const char* kSamplesColumns =
    "step,label,open,c_o,c_a,selected,conf_tilde,conf_hat,logit_tilde,logit_hat,"
    "max_prob_hat,entropy_hat,max_logit_hat,energy_hat";
constexpr std::size_t kSamplesFieldCount = 14;

std::string samples_banner() { return "# tta.samples v" + std::to_string(kSamplesVersion); }

void append_real(std::string& line, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.10g", v);
  line.append(buf, static_cast<std::size_t>(len));
}

template <typename T>
T parse_field(std::string_view field, std::size_t line_no, const char* name) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  require(ec == std::errc() && ptr == end, ErrorCode::kFormat,
          "samples.csv line " + std::to_string(line_no) + ": bad " + name + " '" +
              std::string(field) + "'");
  return value;
}

double parse_real(std::string_view field, std::size_t line_no, const char* name) {
  if (field == "nan" || field == "-nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  return parse_field<double>(field, line_no, name);
}

}  // namespace

void write_runlog_jsonl(const RunLog& log, std::ostream& out) {
  json header = {{"schema", kRunLogSchema},
                 {"version", kRunLogVersion},
                 {"aborted", log.aborted},
                 {"failed_step", log.failed_step},
                 {"error", log.error}};
  out << header.dump() << '\n';
  for (const auto& s : log.steps) {
    json line = {{"step", s.step},
                 {"domain", s.domain_id},
                 {"round", s.round_id},
                 {"skipped", s.skipped},
                 {"n", s.samples.size()},
                 {"loss", s.loss},
                 {"num_selected", s.num_selected},
                 {"updated", s.updated},
                 {"update_norm", s.update_norm}};
    out << line.dump() << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing run log");
}

void write_samples_csv(const RunLog& log, std::ostream& out) {
  out << samples_banner() << '\n' << kSamplesColumns << '\n';
  std::string line;
  for (const auto& step : log.steps) {
    for (const auto& r : step.samples) {
      line.clear();
      line += std::to_string(step.step);
      for (int v : {r.label, static_cast<int>(r.open), r.c_o, r.c_a, static_cast<int>(r.selected)}) {
        line += ',';
        line += std::to_string(v);
      }
      for (double v : {r.scores.conf_tilde, r.scores.conf_hat, r.scores.logit_tilde, r.scores.logit_hat,
                       r.scores.max_prob_hat, r.scores.entropy_hat, r.max_logit_hat, r.energy_hat}) {
        line += ',';
        append_real(line, v);
      }
      line += '\n';
      out << line;
    }
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing samples CSV");
}

RunLog read_runlog_jsonl(std::istream& in) {
  RunLog log;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat, "run log is empty");
  try {
    const json header = json::parse(line);
    require(header.value("schema", "") == kRunLogSchema, ErrorCode::kFormat,
            "run log header has the wrong schema");
    const int version = header.at("version").get<int>();
    require(version == kRunLogVersion, ErrorCode::kFormat,
            "unsupported run log version " + std::to_string(version));
    log.aborted = header.at("aborted").get<bool>();
    log.failed_step = header.at("failed_step").get<std::size_t>();
    log.error = header.at("error").get<std::string>();

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      StepRecord s;
      s.step = j.at("step").get<std::size_t>();
      s.domain_id = j.at("domain").get<int>();
      s.round_id = j.at("round").get<int>();
      s.skipped = j.at("skipped").get<bool>();
      s.loss = j.at("loss").get<double>();
      s.num_selected = j.at("num_selected").get<int>();
      s.updated = j.at("updated").get<bool>();
      s.update_norm = j.at("update_norm").get<double>();
      log.steps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed run log: ") + e.what());
  }
  return log;
}

void read_samples_csv(std::istream& in, RunLog& log) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == samples_banner(), ErrorCode::kFormat,
          "samples.csv: missing or unsupported version banner");
  require(static_cast<bool>(std::getline(in, line)) && line == kSamplesColumns, ErrorCode::kFormat,
          "samples.csv: unexpected column header");

  std::map<std::size_t, std::size_t> index;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    log.steps[i].samples.clear();
    index[log.steps[i].step] = i;
  }

  std::size_t line_no = 2;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    fields.clear();
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    require(fields.size() == kSamplesFieldCount, ErrorCode::kFormat,
            "samples.csv line " + std::to_string(line_no) + ": expected " +
                std::to_string(kSamplesFieldCount) + " fields");
    const auto step = parse_field<std::size_t>(fields[0], line_no, "step");
    const auto it = index.find(step);
    require(it != index.end(), ErrorCode::kFormat,
            "samples.csv line " + std::to_string(line_no) + ": step " + std::to_string(step) +
                " not in run log");
    SampleRecord r;
    r.label = parse_field<int>(fields[1], line_no, "label");
    r.open = parse_field<int>(fields[2], line_no, "open") != 0;
    r.c_o = parse_field<int>(fields[3], line_no, "c_o");
    r.c_a = parse_field<int>(fields[4], line_no, "c_a");
    r.selected = parse_field<int>(fields[5], line_no, "selected") != 0;
    r.scores.conf_tilde = parse_real(fields[6], line_no, "conf_tilde");
    r.scores.conf_hat = parse_real(fields[7], line_no, "conf_hat");
    r.scores.logit_tilde = parse_real(fields[8], line_no, "logit_tilde");
    r.scores.logit_hat = parse_real(fields[9], line_no, "logit_hat");
    r.scores.max_prob_hat = parse_real(fields[10], line_no, "max_prob_hat");
    r.scores.entropy_hat = parse_real(fields[11], line_no, "entropy_hat");
    r.max_logit_hat = parse_real(fields[12], line_no, "max_logit_hat");
    r.energy_hat = parse_real(fields[13], line_no, "energy_hat");
    log.steps[it->second].samples.push_back(r);
  }
}

void save_runlog(const RunLog& log, const std::filesystem::path& jsonl,
                 const std::filesystem::path& samples_csv) {
  {
    std::ofstream out(jsonl);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + jsonl.string());
    write_runlog_jsonl(log, out);
  }
  if (!samples_csv.empty()) {
    std::ofstream out(samples_csv);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + samples_csv.string());
    write_samples_csv(log, out);
  }
}

RunLog load_runlog(const std::filesystem::path& jsonl, const std::filesystem::path& samples_csv) {
  std::ifstream in(jsonl);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + jsonl.string());
  RunLog log = read_runlog_jsonl(in);
  if (!samples_csv.empty()) {
    std::ifstream s(samples_csv);
    require(static_cast<bool>(s), ErrorCode::kIo, "cannot open " + samples_csv.string());
    read_samples_csv(s, log);
  }
  return log;
}

}  // namespace tta
