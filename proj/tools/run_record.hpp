#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fastprio::cli {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Hash of a dataset header plus the tensors it references.
std::string dataset_digest(const std::filesystem::path& header);
// Hash of a model manifest plus every weight blob.
std::string model_digest(const std::filesystem::path& manifest);

// JSON record written next to a command's primary artifact as
// "<artifact>.run.json". Holds no timestamps so it is reproducible too.
class RunRecord {
 public:
  RunRecord(std::string command, std::vector<std::string> argv, std::uint64_t seed);

  void input(const std::string& role, const std::filesystem::path& path, const std::string& digest);
  void output(const std::filesystem::path& path);
  void set_manifest(const std::filesystem::path& path);
  void write(const std::filesystem::path& artifact) const;

 private:
  struct Entry {
    std::string role;
    std::string path;
    std::string digest;
  };
  std::string command_;
  std::vector<std::string> argv_;
  std::uint64_t seed_;
  std::string manifest_;
  std::vector<Entry> inputs_;
  std::vector<std::string> outputs_;
};

}  // namespace fastprio::cli
