#include "q2d/pipeline.hpp"

#include <condition_variable>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "q2d/hashing.hpp"
#include "q2d/http.hpp"

namespace q2d {
namespace {

template <class F>
auto with_retries(const PipelineConfig& cfg, F&& f) {
  for (int attempt = 0;; ++attempt) {
    try {
      return f();
    } catch (const HttpStatusError& e) {
      if (e.is_client_error() || attempt >= cfg.max_retries) throw;
    } catch (const TransportError&) {
      if (attempt >= cfg.max_retries) throw;
    }
    std::this_thread::sleep_for(cfg.retry_backoff * (1 << attempt));
  }
}

// Runs fn(i) for i in [0, n) on `workers` threads and hands results to
// emit(i, value) strictly in index order on the calling thread. The first
// exception stops new work; everything before it is still emitted, then the
// exception is rethrown.
template <class T, class Fn, class Emit>
std::size_t ordered_parallel(std::size_t n, std::size_t workers, Fn&& fn, Emit&& emit, std::stop_token stop) {
  struct Slot {
    bool done = false;
    std::optional<T> value;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(n);
  std::mutex mu;
  std::condition_variable cv;
  std::size_t next = 0;
  bool halt = false;

  auto halt_now = [&] {
    {
      std::lock_guard lock(mu);
      halt = true;
    }
    cv.notify_all();
  };
  std::stop_callback on_stop(stop, halt_now);

  auto work = [&] {
    for (;;) {
      std::size_t i = 0;
      {
        std::lock_guard lock(mu);
        if (halt || next >= n) return;
        i = next++;
      }
      Slot s;
      s.done = true;
      try {
        s.value.emplace(fn(i));
      } catch (...) {
        s.error = std::current_exception();
      }
      {
        std::lock_guard lock(mu);
        if (s.error) halt = true;
        slots[i] = std::move(s);
      }
      cv.notify_all();
    }
  };

  std::size_t emitted = 0;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);

    while (emitted < n) {
      Slot s;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return slots[emitted].done || (halt && emitted >= next); });
        if (!slots[emitted].done) break;
        s = std::move(slots[emitted]);
      }
      if (s.error) {
        error = s.error;
        break;
      }
      try {
        emit(emitted, std::move(*s.value));
      } catch (...) {
        error = std::current_exception();
        break;
      }
      ++emitted;
      if (stop.stop_requested()) break;
    }
    halt_now();
  }
  if (error) std::rethrow_exception(error);
  return emitted;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) return lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

FilterReport report_from_file(const std::filesystem::path& out, const FilterConfig& cfg) {
  const auto samples = read_jsonl<GeneratedSample>(out);
  return FilterReport::compute(samples, cfg);
}

// Streams qa[first..] into `writer`, checkpointing along the way.
RunSummary drive(std::span<const QaRecord> qa, std::size_t first, const PipelineConfig& cfg, Services svc,
                 JsonlWriter& writer, Checkpoint& cp, const RunOptions& opts) {
  constexpr std::size_t kCheckpointEvery = 32;
  RunSummary summary;
  summary.skipped = first;
  auto save = [&] {
    if (cfg.checkpoint_path) cp.save(*cfg.checkpoint_path);
  };
  auto remaining = qa.subspan(first);
  try {
    summary.emitted = ordered_parallel<GeneratedSample>(
        remaining.size(), cfg.concurrency, [&](std::size_t i) { return process_record(remaining[i], cfg, svc); },
        [&](std::size_t, GeneratedSample&& s) {
          writer.write(s);
          cp.done_ids.push_back(s.id);
          if (cp.done_ids.size() % kCheckpointEvery == 0) save();
          if (opts.progress) opts.progress(cp.done_ids.size() - first);
        },
        opts.stop);
  } catch (...) {
    save();
    throw;
  }
  save();
  summary.completed = first + summary.emitted == qa.size();
  return summary;
}

void check_unique_ids(std::span<const QaRecord> qa) {
  std::unordered_map<std::string_view, std::size_t> seen;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    if (!seen.emplace(qa[i].id, i).second) throw InputError("duplicate QA id \"" + qa[i].id + "\"");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  prompt_set.validate();
  lm.validate();
  scorers.validate();
  filters.validate();
  if (concurrency < 1) throw InputError("concurrency must be >= 1");
  if (!(forward_temperature >= 0.0)) throw InputError("forward temperature must be >= 0");
  if (max_retries < 0) throw InputError("max_retries must be >= 0");
  if (filters.nli_enabled && scorers.kind != ScoreProviderConfig::Kind::remote) {
    throw InputError("the NLI filter needs a remote score provider");
  }
}

Json PipelineConfig::to_json() const {
  Json ps;
  q2d::to_json(ps, prompt_set);
  return Json{{"prompt_set_sha256", sha256_hex(canonical_dump(ps))},
              {"lm", lm.to_json()},
              {"scorers", scorers.to_json()},
              {"filters", filters.to_json()},
              {"forward_temperature", forward_temperature},
              {"concurrency", concurrency},
              {"checkpoint_path", checkpoint_path ? Json(checkpoint_path->string()) : Json(nullptr)},
              {"max_retries", max_retries}};
}

std::string PipelineConfig::fingerprint() const {
  Json ps;
  q2d::to_json(ps, prompt_set);
  return sha256_hex(canonical_dump(
      Json{{"prompt_set", canonical_dump(ps)}, {"filters", filters.to_json()}, {"backend", to_string(lm.kind)}}));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  try {
    const auto j = Json::parse(read_file(path));
    return Checkpoint{j.at("fingerprint").get<std::string>(), j.at("done_ids").get<std::vector<std::string>>()};
  } catch (const Json::exception& e) {
    throw InputError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  write_file_atomic(path, canonical_dump(Json{{"fingerprint", fingerprint}, {"done_ids", done_ids}}) + "\n");
}

GeneratedSample process_record(const QaRecord& qa, const PipelineConfig& cfg, Services svc) {
  GeneratedSample s;
  s.id = qa.id;
  s.source_question = qa.question;
  s.answer = qa.answer;

  const auto fwd = forward_request(cfg.prompt_set, qa.question, cfg.forward_temperature);
  const std::string completion = with_retries(cfg, [&] { return svc.lm.complete(fwd); });
  try {
    s.dialog = parse_dialog(completion);
  } catch (const ParseError&) {
    s.verdict = parse_error_verdict();
    return s;
  }

  const auto rev = reverse_request(cfg.prompt_set, s.dialog);
  s.reversed_question = clean_reverse_completion(with_retries(cfg, [&] { return svc.lm.complete(rev); }));
  if (s.reversed_question.empty()) {
    s.verdict = parse_error_verdict();
    return s;
  }

  s.scores = with_retries(cfg, [&] { return score_sample(s, svc.scorer, cfg.filters); });
  s.verdict = apply_filters(s.scores, cfg.filters);
  return s;
}

std::vector<GeneratedSample> run_q2d(std::span<const QaRecord> qa, const PipelineConfig& cfg, Services svc,
                                     const RunOptions& opts) {
  cfg.validate();
  check_unique_ids(qa);
  std::vector<GeneratedSample> out;
  out.reserve(qa.size());
  ordered_parallel<GeneratedSample>(
      qa.size(), cfg.concurrency, [&](std::size_t i) { return process_record(qa[i], cfg, svc); },
      [&](std::size_t, GeneratedSample&& s) {
        out.push_back(std::move(s));
        if (opts.progress) opts.progress(out.size());
      },
      opts.stop);
  return out;
}

RunSummary run_q2d_to_file(std::span<const QaRecord> qa, const PipelineConfig& cfg, Services svc,
                           const std::filesystem::path& out, const RunOptions& opts) {
  cfg.validate();
  check_unique_ids(qa);
  Checkpoint cp{cfg.fingerprint(), {}};
  if (cfg.checkpoint_path) cp.save(*cfg.checkpoint_path);
  JsonlWriter writer(out);
  auto summary = drive(qa, 0, cfg, svc, writer, cp, opts);
  summary.report = report_from_file(out, cfg.filters);
  return summary;
}

RunSummary resume(const std::filesystem::path& checkpoint_path, std::span<const QaRecord> qa,
                  const PipelineConfig& cfg, Services svc, const std::filesystem::path& out,
                  const RunOptions& opts) {
  cfg.validate();
  check_unique_ids(qa);
  Checkpoint cp = Checkpoint::load(checkpoint_path);
  if (cp.fingerprint != cfg.fingerprint()) {
    throw InputError("checkpoint " + checkpoint_path.string() +
                     " was written under a different configuration (prompt set, filter thresholds or "
                     "backend kind changed); refusing to resume");
  }
  const std::size_t done = cp.done_ids.size();
  if (done > qa.size()) throw InputError("checkpoint lists more records than the input holds");
  for (std::size_t i = 0; i < done; ++i) {
    if (cp.done_ids[i] != qa[i].id) {
      throw InputError("checkpoint record " + std::to_string(i) + " is \"" + cp.done_ids[i] +
                       "\" but the input has \"" + qa[i].id + "\"; input changed since the run started");
    }
  }

  // The output may hold lines past the last checkpoint; keep exactly the
  // checkpointed prefix.
  auto lines = read_lines(out);
  if (lines.size() < done) {
    throw InputError(out.string() + " holds " + std::to_string(lines.size()) + " samples but the checkpoint lists " +
                     std::to_string(done));
  }
  std::string kept;
  for (std::size_t i = 0; i < done; ++i) {
    const auto id = Json::parse(lines[i]).at("id").get<std::string>();
    if (id != cp.done_ids[i]) throw InputError(out.string() + ": line " + std::to_string(i + 1) + " does not match checkpoint");
    kept += lines[i];
    kept += '\n';
  }
  if (lines.size() != done) write_file_atomic(out, kept);

  RunSummary summary;
  if (done == qa.size()) {
    summary.skipped = done;
    summary.completed = true;
  } else {
    PipelineConfig resumed = cfg;
    resumed.checkpoint_path = checkpoint_path;
    JsonlWriter writer(out, JsonlWriter::Mode::append);
    summary = drive(qa, done, resumed, svc, writer, cp, opts);
  }
  summary.report = report_from_file(out, cfg.filters);
  return summary;
}

std::vector<GeneratedSample> regenerate_answers(std::span<const GeneratedSample> samples, const PipelineConfig& cfg,
                                                LmBackend& lm) {
  if (cfg.concurrency < 1) throw InputError("concurrency must be >= 1");
  cfg.prompt_set.validate();
  for (const auto& s : samples) {
    if (!s.dialog.empty()) validate_dialog(s.dialog);
  }

  auto regenerate = [&](std::size_t idx) {
    GeneratedSample s = samples[idx];
    auto& turns = s.dialog.turns;
    std::optional<std::size_t> last_user;
    for (std::size_t i = 0; i < turns.size(); ++i) {
      if (turns[i].role == Role::user) {
        last_user = i;
        continue;
      }
      if (!last_user) continue;
      const Dialog prefix{std::vector<DialogTurn>(turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(*last_user) + 1)};
      turns[i].text = with_retries(cfg, [&] { return generate_response(lm, cfg.prompt_set, prefix); });
    }
    return s;
  };

  std::vector<GeneratedSample> out;
  out.reserve(samples.size());
  ordered_parallel<GeneratedSample>(
      samples.size(), cfg.concurrency, regenerate, [&](std::size_t, GeneratedSample&& s) { out.push_back(std::move(s)); },
      std::stop_token{});
  return out;
}

}  // namespace q2d
