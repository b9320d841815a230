#include "cdrsig/group_by.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <queue>
#include <tuple>

#include <unistd.h>

namespace cdrsig {

namespace {

bool entry_less(const CdrRecord& a, std::uint64_t sa, const CdrRecord& b, std::uint64_t sb) {
  if (int c = a.user_id.compare(b.user_id); c != 0) return c < 0;
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return sa < sb;
}

void write_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
void write_str(std::ofstream& out, const std::string& s) {
  const auto n = static_cast<std::uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(s.data(), n);
}

bool read_u64(std::ifstream& in, std::uint64_t& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}
bool read_str(std::ifstream& in, std::string& s) {
  std::uint32_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) return false;
  s.resize(n);
  return static_cast<bool>(in.read(s.data(), n));
}

class RunReader {
 public:
  explicit RunReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorCode::Spill, "cannot reopen spill run '" + path.string() + "'");
  }

  bool next(CdrRecord& r, std::uint64_t& seq) {
    std::uint64_t ts = 0, dur = 0, tags = 0;
    if (!read_u64(in_, seq)) {
      if (in_.eof()) return false;
      throw Error(ErrorCode::Spill, "read failure in '" + path_.string() + "'");
    }
    if (!read_u64(in_, ts) || !read_u64(in_, dur) || !read_u64(in_, tags) || !read_str(in_, r.user_id) ||
        !read_str(in_, r.tower_id) || !read_str(in_, r.counterpart_id)) {
      throw Error(ErrorCode::Spill, "truncated spill run '" + path_.string() + "'");
    }
    r.timestamp = Timestamp{std::chrono::seconds{static_cast<std::int64_t>(ts)}};
    r.duration_s = static_cast<std::int64_t>(dur);
    r.activity_type = static_cast<ActivityType>(tags & 0xff);
    const auto d = (tags >> 8) & 0xff;
    r.direction = d == 0 ? std::nullopt : std::optional<Direction>(d == 1 ? Direction::outgoing : Direction::incoming);
    return true;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

UserGrouper::UserGrouper(GroupOptions options) : options_(std::move(options)) {
  buffer_.reserve(std::min<std::size_t>(options_.max_records_in_memory, 1u << 16));
}

UserGrouper::~UserGrouper() {
  std::error_code ec;
  if (!run_dir_.empty()) std::filesystem::remove_all(run_dir_, ec);
}

void UserGrouper::add(CdrRecord record) {
  buffer_.push_back(Entry{std::move(record), seq_++});
  if (buffer_.size() >= std::max<std::size_t>(options_.max_records_in_memory, 1)) spill();
}

void UserGrouper::spill() {
  if (buffer_.empty()) return;
  std::sort(buffer_.begin(), buffer_.end(), [](const Entry& a, const Entry& b) {
    return entry_less(a.record, a.seq, b.record, b.seq);
  });
  if (run_dir_.empty()) {
    static std::atomic<std::uint64_t> counter{0};
    run_dir_ = options_.spill_dir / ("cdrsig-spill-" + std::to_string(::getpid()) + "-" +
                                     std::to_string(counter.fetch_add(1)));
    std::error_code ec;
    std::filesystem::create_directories(run_dir_, ec);
    if (ec) throw Error(ErrorCode::Spill, "cannot create spill directory '" + run_dir_.string() + "': " + ec.message());
  }
  const auto path = run_dir_ / ("run-" + std::to_string(runs_.size()) + ".bin");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Spill, "cannot create spill run '" + path.string() + "'");
  for (const auto& e : buffer_) {
    const auto& r = e.record;
    const std::uint64_t dir = !r.direction ? 0 : (*r.direction == Direction::outgoing ? 1 : 2);
    write_u64(out, e.seq);
    write_u64(out, static_cast<std::uint64_t>(r.timestamp.time_since_epoch().count()));
    write_u64(out, static_cast<std::uint64_t>(r.duration_s));
    write_u64(out, static_cast<std::uint64_t>(r.activity_type) | (dir << 8));
    write_str(out, r.user_id);
    write_str(out, r.tower_id);
    write_str(out, r.counterpart_id);
  }
  out.close();
  if (!out) throw Error(ErrorCode::Spill, "write failure on spill run '" + path.string() + "'");
  runs_.push_back(path);
  buffer_.clear();
}

void UserGrouper::finish(const GroupSink& sink) {
  std::vector<CdrRecord> group;
  std::string current;

  if (runs_.empty()) {
    std::sort(buffer_.begin(), buffer_.end(), [](const Entry& a, const Entry& b) {
      return entry_less(a.record, a.seq, b.record, b.seq);
    });
    for (auto& e : buffer_) {
      if (!group.empty() && e.record.user_id != current) {
        sink(current, group);
        group.clear();
      }
      current = e.record.user_id;
      group.push_back(std::move(e.record));
    }
    if (!group.empty()) sink(current, group);
    buffer_.clear();
    return;
  }

  spill();
  std::vector<RunReader> readers;
  readers.reserve(runs_.size());
  for (const auto& p : runs_) readers.emplace_back(p);
  std::vector<std::pair<CdrRecord, std::uint64_t>> heads(readers.size());
  auto cmp = [&](std::size_t a, std::size_t b) {
    // priority_queue is a max-heap; invert.
    return entry_less(heads[b].first, heads[b].second, heads[a].first, heads[a].second);
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
  for (std::size_t i = 0; i < readers.size(); ++i) {
    if (readers[i].next(heads[i].first, heads[i].second)) heap.push(i);
  }
  while (!heap.empty()) {
    const std::size_t i = heap.top();
    heap.pop();
    CdrRecord rec = heads[i].first;
    if (readers[i].next(heads[i].first, heads[i].second)) heap.push(i);
    if (!group.empty() && rec.user_id != current) {
      sink(current, group);
      group.clear();
    }
    current = rec.user_id;
    group.push_back(std::move(rec));
  }
  if (!group.empty()) sink(current, group);

  std::error_code ec;
  std::filesystem::remove_all(run_dir_, ec);
  run_dir_.clear();
  runs_.clear();
}

std::vector<std::pair<std::string, std::vector<CdrRecord>>> group_by_user(std::vector<CdrRecord> records) {
  UserGrouper g(GroupOptions{records.size() + 1, std::filesystem::temp_directory_path()});
  for (auto& r : records) g.add(std::move(r));
  std::vector<std::pair<std::string, std::vector<CdrRecord>>> out;
  g.finish([&](const std::string& user, std::vector<CdrRecord>& recs) { out.emplace_back(user, std::move(recs)); });
  return out;
}

}  // namespace cdrsig
