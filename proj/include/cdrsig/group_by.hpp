// Group CDR records by user with an external merge sort.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cdrsig/core.hpp"

namespace cdrsig {

struct GroupOptions {
  // Records buffered in memory before a sorted run is spilled to disk.
  std::size_t max_records_in_memory = 1u << 20;
  // Directory for spill files; a unique subdirectory is created and removed.
  std::filesystem::path spill_dir = std::filesystem::temp_directory_path();
};

// Accepts records in any order and yields each user exactly once, in
// ascending user_id order, with that user's records sorted by timestamp
// (ties keep input order).
class UserGrouper {
 public:
  explicit UserGrouper(GroupOptions options = {});
  ~UserGrouper();
  UserGrouper(const UserGrouper&) = delete;
  UserGrouper& operator=(const UserGrouper&) = delete;

  void add(CdrRecord record);
  std::size_t spilled_runs() const { return runs_.size(); }

  using GroupSink = std::function<void(const std::string& user_id, std::vector<CdrRecord>& records)>;
  // Consumes the grouper. Throws Error{Spill} on spill I/O failures.
  void finish(const GroupSink& sink);

 private:
  struct Entry {
    CdrRecord record;
    std::uint64_t seq;
  };
  void spill();

  GroupOptions options_;
  std::vector<Entry> buffer_;
  std::vector<std::filesystem::path> runs_;
  std::filesystem::path run_dir_;
  std::uint64_t seq_ = 0;
};

// In-memory convenience for small inputs and tests.
std::vector<std::pair<std::string, std::vector<CdrRecord>>> group_by_user(std::vector<CdrRecord> records);

}  // namespace cdrsig
