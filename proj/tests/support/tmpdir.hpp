#pragma once

#include <atomic>
#include <filesystem>
#include <string>

namespace dacount::testing {

// Unique scratch directory, removed on scope exit.
struct TmpDir {
  std::filesystem::path path;

  explicit TmpDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("dacount-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace dacount::testing
