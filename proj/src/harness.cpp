#include "topobench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "topobench/rng.hpp"

namespace topobench {

using nlohmann::json;
using nlohmann::ordered_json;

std::string EndpointConfig::id() const {
  char buf[64];
  if (kind == "mock-noise") {
    std::snprintf(buf, sizeof buf, "mock-noise:p=%g:seed=%llu", noise_p,
                  static_cast<unsigned long long>(noise_seed));
    return buf;
  }
  if (kind != "http") return kind;
  std::snprintf(buf, sizeof buf, ":temp=%g", temperature);
  return "http:" + base_url + path + ":" + model + buf;
}

namespace {

class HttpTransport : public Transport {
 public:
  HttpResponse post(const EndpointConfig& ep, const std::string& body) override {
    httplib::Client client(ep.base_url);
    client.set_connection_timeout(std::chrono::milliseconds(ep.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(ep.timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(ep.timeout_ms));
    httplib::Headers headers;
    if (!ep.auth_env.empty()) {
      const char* token = std::getenv(ep.auth_env.c_str());
      if (token && *token) headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    auto res = client.Post(ep.path, headers, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }
};

std::string truncate_for_error(const std::string& s) {
  if (s.size() <= 200) return s;
  return s.substr(0, 200) + "...";
}

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttpTransport>(); }

std::string call_model(const EndpointConfig& ep, const std::string& prompt, Transport& transport,
                       const std::function<void(int)>& sleep_ms) {
  if (!ep.auth_env.empty()) {
    const char* token = std::getenv(ep.auth_env.c_str());
    if (!token || !*token) {
      throw HarnessError("MissingAuth: environment variable " + ep.auth_env + " is not set");
    }
  }

  json request;
  request["model"] = ep.model;
  request["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  request["temperature"] = ep.temperature;
  const std::string body = request.dump();

  std::string last_failure;
  for (int attempt = 0; attempt <= ep.max_retries; attempt++) {
    if (attempt > 0) {
      int delay = static_cast<int>(ep.retry_base_ms * std::pow(2.0, attempt - 1));
      if (sleep_ms) {
        sleep_ms(delay);
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
    }
    HttpResponse resp = transport.post(ep, body);
    if (!resp.error.empty()) {
      last_failure = "transport: " + resp.error;
      continue;
    }
    if (resp.status == 429 || (resp.status >= 500 && resp.status < 600)) {
      last_failure = "status " + std::to_string(resp.status);
      continue;
    }
    if (resp.status != 200) {
      throw HarnessError("HttpStatus " + std::to_string(resp.status) + ": " +
                         truncate_for_error(resp.body));
    }
    json parsed = json::parse(resp.body, nullptr, false);
    if (parsed.is_discarded()) {
      throw HarnessError("MalformedResponse: body is not JSON: " + truncate_for_error(resp.body));
    }
    try {
      return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw HarnessError(std::string("MalformedResponse: ") + e.what() + ": " +
                         truncate_for_error(resp.body));
    }
  }
  throw HarnessError("RetriesExhausted: " + std::to_string(ep.max_retries + 1) +
                     " attempts failed, last " + last_failure);
}

std::string cache_key(const std::string& endpoint_id, const std::string& prompt) {
  std::string joined = endpoint_id;
  joined.push_back('\n');
  joined += prompt;
  std::uint64_t a = fnv1a64(joined);
  std::uint64_t b = mix64(fnv1a64(endpoint_id), fnv1a64(prompt));
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

CompletionCache::CompletionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::string> CompletionCache::get(const std::string& key) const {
  std::ifstream in(dir_ / (key + ".txt"), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void CompletionCache::put(const std::string& key, const std::string& completion) const {
  auto final_path = dir_ / (key + ".txt");
  auto tmp_path = dir_ / (key + ".tmp" +
                          std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    out << completion;
    if (!out) throw HarnessError("CacheWriteFailed: " + tmp_path.string());
  }
  std::filesystem::rename(tmp_path, final_path);
}

std::vector<const TaskInstance*> sample_instances(const std::vector<TaskInstance>& dataset,
                                                  Subject subject, Difficulty difficulty,
                                                  int count, std::uint64_t seed) {
  std::vector<const TaskInstance*> stratum;
  for (const TaskInstance& inst : dataset) {
    if (inst.subject == subject && inst.difficulty == difficulty) stratum.push_back(&inst);
  }
  if (stratum.empty()) {
    throw HarnessError(std::string("InsufficientInstances: stratum ") + subject_slug(subject) +
                       "/" + difficulty_name(difficulty) + " is empty");
  }
  int k = std::min<int>(count, static_cast<int>(stratum.size()));
  SplitMix64 rng(mix64(mix64(seed, fnv1a64(subject_slug(subject))),
                       fnv1a64(difficulty_name(difficulty))));
  std::vector<int> picked =
      sample_without_replacement(static_cast<int>(stratum.size()), k, rng);
  std::sort(picked.begin(), picked.end());
  std::vector<const TaskInstance*> out;
  out.reserve(picked.size());
  for (int i : picked) out.push_back(stratum[static_cast<size_t>(i)]);
  return out;
}

namespace {

std::string mock_completion(const EndpointConfig& ep, const TaskInstance& inst) {
  if (ep.kind == "mock-echo") {
    return render_grid(inst.ground_truth, inst.difficulty);
  }
  if (ep.kind == "mock-zeros") {
    Grid g = inst.input;
    for (Cell& cell : g.cells) {
      if (cell.kind == CellKind::Void) cell = Cell::of(0.0);
    }
    return render_grid(g, inst.difficulty);
  }
  if (ep.kind == "mock-noise") {
    Grid g = inst.ground_truth;
    for (const auto& [r, c] : inst.mask) {
      // Common random numbers: the flip draw depends on (seed, id, cell) but
      // not on noise_p, so raising p only ever adds flips.
      SplitMix64 rng(mix64(mix64(ep.noise_seed, fnv1a64(inst.id)),
                           (static_cast<std::uint64_t>(r) << 32) | static_cast<std::uint32_t>(c)));
      if (rng.next_unit() < ep.noise_p) {
        Cell& cell = g.at(r, c);
        if (cell.is_value()) cell = Cell::of(1.0 - cell.value);
      }
    }
    return render_grid(g, inst.difficulty);
  }
  throw HarnessError("UnknownEndpointKind: " + ep.kind);
}

std::string iso8601_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace

std::vector<RunRecord> run(const std::vector<TaskInstance>& dataset, const RunSpec& spec,
                           const MetricConfig& metrics, Transport* transport) {
  std::vector<Subject> subjects(spec.subjects);
  if (subjects.empty()) subjects.assign(std::begin(kAllSubjects), std::end(kAllSubjects));
  std::vector<Difficulty> difficulties(spec.difficulties);
  if (difficulties.empty()) difficulties = {Difficulty::Easy, Difficulty::Hard};

  std::vector<const TaskInstance*> selected;
  for (Subject s : subjects) {
    for (Difficulty d : difficulties) {
      auto sampled = sample_instances(dataset, s, d, spec.sample_count, spec.seed);
      selected.insert(selected.end(), sampled.begin(), sampled.end());
    }
  }

  std::unique_ptr<CompletionCache> cache;
  if (!spec.cache_dir.empty()) cache = std::make_unique<CompletionCache>(spec.cache_dir);
  const bool is_mock = spec.endpoint.kind.rfind("mock", 0) == 0;
  if (spec.endpoint.kind != "http" && spec.endpoint.kind != "mock-echo" &&
      spec.endpoint.kind != "mock-zeros" && spec.endpoint.kind != "mock-noise") {
    throw HarnessError("UnknownEndpointKind: " + spec.endpoint.kind);
  }
  const std::string endpoint_id = spec.endpoint.id();

  std::vector<RunRecord> records(selected.size());
  std::atomic<size_t> cursor{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      size_t i = cursor.fetch_add(1);
      if (i >= selected.size()) return;
      try {
        TaskInstance inst = rotate_instance(*selected[i], spec.rotation);
        std::vector<const TaskInstance*> examples;
        std::vector<TaskInstance> rotated_examples;
        if (spec.shots > 0) {
          examples = pick_examples(dataset, inst, spec.shots, spec.seed);
          if (spec.rotation != 0) {
            rotated_examples.reserve(examples.size());
            for (const TaskInstance* ex : examples) {
              rotated_examples.push_back(rotate_instance(*ex, spec.rotation));
            }
            examples.clear();
            for (const TaskInstance& ex : rotated_examples) examples.push_back(&ex);
          }
        }
        RunRecord rec;
        rec.id = inst.id;
        rec.subject = inst.subject;
        rec.difficulty = inst.difficulty;
        rec.rotation = inst.rotation;
        rec.endpoint = endpoint_id;
        rec.style = prompt_style_name(spec.style);
        rec.shots = static_cast<int>(examples.size());
        rec.prompt = render_prompt(inst, spec.style, examples);
        try {
          std::string key;
          std::optional<std::string> cached;
          if (cache) {
            key = cache_key(endpoint_id, rec.prompt);
            cached = cache->get(key);
          }
          if (cached) {
            rec.completion = *cached;
          } else if (is_mock) {
            rec.completion = mock_completion(spec.endpoint, inst);
          } else {
            if (!transport) throw HarnessError("NoTransport: http endpoint without transport");
            rec.completion = call_model(spec.endpoint, rec.prompt, *transport);
          }
          if (cache && !cached) cache->put(key, rec.completion);
        } catch (const HarnessError& e) {
          rec.error = e.what();
          rec.completion.clear();
        }
        rec.report = evaluate(inst, parse_completion(rec.completion), metrics);
        rec.completed_at = iso8601_now();
        records[i] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  int threads = std::max(1, spec.concurrency);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; t++) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) { return a.id < b.id; });
  return records;
}

std::string record_to_json(const RunRecord& rec) {
  ordered_json j;
  j["id"] = rec.id;
  j["subject"] = subject_slug(rec.subject);
  j["difficulty"] = difficulty_name(rec.difficulty);
  j["rotation"] = rec.rotation;
  j["endpoint"] = rec.endpoint;
  j["style"] = rec.style;
  j["shots"] = rec.shots;
  j["prompt"] = rec.prompt;
  j["completion"] = rec.completion;
  if (!rec.error.empty()) j["error"] = rec.error;
  j["report"] = ordered_json::parse(report_to_json(rec.report));
  j["completed_at"] = rec.completed_at;
  return j.dump();
}

RunRecord record_from_json(const std::string& line) {
  json j = json::parse(line);
  RunRecord rec;
  rec.id = j.at("id").get<std::string>();
  rec.subject = parse_subject(j.at("subject").get<std::string>());
  rec.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
  rec.rotation = j.at("rotation").get<int>();
  rec.endpoint = j.at("endpoint").get<std::string>();
  rec.style = j.at("style").get<std::string>();
  rec.shots = j.at("shots").get<int>();
  rec.prompt = j.at("prompt").get<std::string>();
  rec.completion = j.at("completion").get<std::string>();
  if (j.contains("error")) rec.error = j.at("error").get<std::string>();
  rec.report = report_from_json(j.at("report").dump());
  rec.completed_at = j.at("completed_at").get<std::string>();
  return rec;
}

void write_records(std::ostream& out, const std::vector<RunRecord>& records) {
  for (const RunRecord& rec : records) out << record_to_json(rec) << '\n';
}

std::vector<RunRecord> read_records(std::istream& in) {
  std::vector<RunRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(line));
  }
  return out;
}

namespace {

struct Accumulator {
  double sum = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    n++;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / n;
  }
};

int subject_rank(Subject s) {
  for (size_t i = 0; i < std::size(kAllSubjects); i++) {
    if (kAllSubjects[i] == s) return static_cast<int>(i);
  }
  return static_cast<int>(std::size(kAllSubjects));
}

AggregateRow aggregate_group(Subject subject, Difficulty difficulty,
                             const std::vector<const RunRecord*>& group) {
  AggregateRow row;
  row.subject = subject;
  row.difficulty = difficulty;
  row.n = static_cast<int>(group.size());
  int exact = 0, valid = 0, ls = 0, dls = 0;
  Accumulator diff, rel, pen, dw_diff, dw_rel, dwcs, islands, fpceff;
  for (const RunRecord* rec : group) {
    const MetricReport& r = rec->report;
    if (r.exact) exact++;
    if (r.valid) valid++;
    if (r.ls_conn && *r.ls_conn) ls++;
    if (r.dir_ls_conn && *r.dir_ls_conn) dls++;
    if (r.diff_ratio) diff.add(*r.diff_ratio);
    if (r.rel_diff_ratio) rel.add(*r.rel_diff_ratio);
    if (r.pen_diff_ratio) pen.add(*r.pen_diff_ratio);
    if (r.dw_diff_ratio) dw_diff.add(*r.dw_diff_ratio);
    if (r.dw_rel_diff_ratio) dw_rel.add(*r.dw_rel_diff_ratio);
    if (r.islands) islands.add(*r.islands);
    if (r.fpceff) fpceff.add(*r.fpceff);
    dwcs.add(r.dwcs);
  }
  double n = static_cast<double>(row.n);
  row.exact = 100.0 * exact / n;
  row.valid = 100.0 * valid / n;
  row.ls_conn = 100.0 * ls / n;
  row.dir_ls_conn = 100.0 * dls / n;
  auto pct = [](const Accumulator& a) -> std::optional<double> {
    auto m = a.mean();
    if (!m) return std::nullopt;
    return 100.0 * *m;
  };
  row.diff_ratio = pct(diff);
  row.rel_diff_ratio = pct(rel);
  row.pen_diff_ratio = pct(pen);
  row.dw_diff_ratio = pct(dw_diff);
  row.dw_rel_diff_ratio = pct(dw_rel);
  row.dwcs = dwcs.mean().value_or(0.0);
  row.islands = islands.mean();
  row.fpceff = pct(fpceff);
  return row;
}

AggregateRow average_rows(Difficulty difficulty, const std::vector<const AggregateRow*>& rows) {
  AggregateRow avg;
  avg.difficulty = difficulty;
  Accumulator exact, diff, rel, pen, dw_diff, dw_rel, dwcs, valid, ls, dls, islands, fpceff;
  for (const AggregateRow* r : rows) {
    avg.n += r->n;
    exact.add(r->exact);
    valid.add(r->valid);
    ls.add(r->ls_conn);
    dls.add(r->dir_ls_conn);
    dwcs.add(r->dwcs);
    if (r->diff_ratio) diff.add(*r->diff_ratio);
    if (r->rel_diff_ratio) rel.add(*r->rel_diff_ratio);
    if (r->pen_diff_ratio) pen.add(*r->pen_diff_ratio);
    if (r->dw_diff_ratio) dw_diff.add(*r->dw_diff_ratio);
    if (r->dw_rel_diff_ratio) dw_rel.add(*r->dw_rel_diff_ratio);
    if (r->islands) islands.add(*r->islands);
    if (r->fpceff) fpceff.add(*r->fpceff);
  }
  avg.exact = exact.mean().value_or(0.0);
  avg.valid = valid.mean().value_or(0.0);
  avg.ls_conn = ls.mean().value_or(0.0);
  avg.dir_ls_conn = dls.mean().value_or(0.0);
  avg.dwcs = dwcs.mean().value_or(0.0);
  avg.diff_ratio = diff.mean();
  avg.rel_diff_ratio = rel.mean();
  avg.pen_diff_ratio = pen.mean();
  avg.dw_diff_ratio = dw_diff.mean();
  avg.dw_rel_diff_ratio = dw_rel.mean();
  avg.islands = islands.mean();
  avg.fpceff = fpceff.mean();
  return avg;
}

}  // namespace

AggregateTable aggregate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw HarnessError("EmptyGroup: no records to aggregate");
  std::map<std::pair<int, int>, std::vector<const RunRecord*>> groups;
  for (const RunRecord& rec : records) {
    groups[{subject_rank(rec.subject), rec.difficulty == Difficulty::Hard ? 1 : 0}].push_back(
        &rec);
  }
  AggregateTable table;
  for (const auto& [key, group] : groups) {
    table.rows.push_back(
        aggregate_group(group.front()->subject, group.front()->difficulty, group));
  }
  for (Difficulty d : {Difficulty::Easy, Difficulty::Hard}) {
    std::vector<const AggregateRow*> rows;
    for (const AggregateRow& row : table.rows) {
      if (row.difficulty == d) rows.push_back(&row);
    }
    if (!rows.empty()) table.averages.push_back(average_rows(d, rows));
  }
  return table;
}

namespace {

std::string fmt_opt(const std::optional<double>& v, int width) {
  char buf[32];
  if (v) {
    std::snprintf(buf, sizeof buf, "%*.1f", width, *v);
  } else {
    std::snprintf(buf, sizeof buf, "%*s", width, "-");
  }
  return buf;
}

std::string fmt_num(double v, int width, int precision) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%*.*f", width, precision, v);
  return buf;
}

void format_row(std::ostringstream& out, const std::string& label, const AggregateRow& row) {
  char head[48];
  std::snprintf(head, sizeof head, "%-16s %-5s %5d", label.c_str(),
                difficulty_name(row.difficulty), row.n);
  out << head << fmt_num(row.exact, 8, 1) << fmt_opt(row.diff_ratio, 8)
      << fmt_opt(row.rel_diff_ratio, 8) << fmt_opt(row.pen_diff_ratio, 8)
      << fmt_opt(row.dw_diff_ratio, 8) << fmt_opt(row.dw_rel_diff_ratio, 8)
      << fmt_num(row.dwcs, 7, 2) << fmt_num(row.valid, 8, 1) << fmt_num(row.ls_conn, 8, 1)
      << fmt_num(row.dir_ls_conn, 8, 1) << fmt_opt(row.islands, 7)
      << fmt_opt(row.fpceff, 8) << '\n';
}

}  // namespace

std::string format_table(const AggregateTable& table) {
  std::ostringstream out;
  char head[160];
  std::snprintf(head, sizeof head, "%-16s %-5s %5s%8s%8s%8s%8s%8s%8s%7s%8s%8s%8s%7s%8s",
                "subject", "diff", "n", "em", "dr", "rdr", "pdr", "dwdr", "dwrdr", "dwcs",
                "valid", "ls", "dls", "isl", "fpce");
  out << head << '\n';
  out << std::string(std::char_traits<char>::length(head), '-') << '\n';
  for (const AggregateRow& row : table.rows) {
    format_row(out, subject_slug(row.subject), row);
  }
  if (!table.averages.empty()) {
    out << std::string(std::char_traits<char>::length(head), '-') << '\n';
    for (const AggregateRow& row : table.averages) {
      format_row(out, "average", row);
    }
  }
  return out.str();
}

namespace {

ordered_json row_to_json(const std::string& label, const AggregateRow& row) {
  ordered_json j;
  j["subject"] = label;
  j["difficulty"] = difficulty_name(row.difficulty);
  j["n"] = row.n;
  j["exact_match"] = row.exact;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("diff_ratio", row.diff_ratio);
  put("rel_diff_ratio", row.rel_diff_ratio);
  put("pen_diff_ratio", row.pen_diff_ratio);
  put("dw_diff_ratio", row.dw_diff_ratio);
  put("dw_rel_diff_ratio", row.dw_rel_diff_ratio);
  j["dwcs"] = row.dwcs;
  j["valid_grid"] = row.valid;
  j["ls_conn"] = row.ls_conn;
  j["dir_ls_conn"] = row.dir_ls_conn;
  put("islands", row.islands);
  put("fpceff", row.fpceff);
  return j;
}

}  // namespace

std::string table_to_records(const AggregateTable& table) {
  std::ostringstream out;
  for (const AggregateRow& row : table.rows) {
    out << row_to_json(subject_slug(row.subject), row).dump() << '\n';
  }
  for (const AggregateRow& row : table.averages) {
    out << row_to_json("average", row).dump() << '\n';
  }
  return out.str();
}

}  // namespace topobench
