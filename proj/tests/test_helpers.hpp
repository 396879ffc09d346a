#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "carcensus/util.hpp"

namespace test_helpers {

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    dir_ = std::filesystem::temp_directory_path() /
           ("carcensus_" + tag + "_" + std::to_string(++counter) + "_" +
            std::to_string(static_cast<long long>(::getpid())));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const std::filesystem::path p = dir_ / name;
    carcensus::write_text_file_atomic(p, content);
    return p;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace test_helpers
