#include "run_record.hpp"

#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "fastprio/dataset.hpp"
#include "fastprio/model_io.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio::cli {

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

std::string dataset_digest(const std::filesystem::path& header) {
  const Dataset ds = load_dataset(header);
  const std::size_t n = ds.size();
  std::vector<float> labels(ds.labels().begin(), ds.labels().end());
  std::string bytes = encode_tensor(ds.inputs());
  bytes += encode_tensor(Tensor({n}, std::move(labels)));
  bytes += std::to_string(ds.classes());
  return sha256_hex(bytes);
}

std::string model_digest(const std::filesystem::path& manifest) {
  return sha256_hex(model_fingerprint_bytes(load_model(manifest)));
}

RunRecord::RunRecord(std::string command, std::vector<std::string> argv, std::uint64_t seed)
    : command_(std::move(command)), argv_(std::move(argv)), seed_(seed) {}

void RunRecord::input(const std::string& role, const std::filesystem::path& path, const std::string& digest) {
  inputs_.push_back({role, path.generic_string(), digest});
}

void RunRecord::output(const std::filesystem::path& path) { outputs_.push_back(path.generic_string()); }

void RunRecord::set_manifest(const std::filesystem::path& path) { manifest_ = path.generic_string(); }

void RunRecord::write(const std::filesystem::path& artifact) const {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& e : inputs_) inputs.push_back({{"role", e.role}, {"path", e.path}, {"sha256", e.digest}});
  nlohmann::json j{{"command", command_},
                   {"argv", argv_},
                   {"seed", seed_},
                   {"version", FASTPRIO_VERSION},
                   {"inputs", inputs},
                   {"outputs", outputs_}};
  if (!manifest_.empty()) j["manifest"] = manifest_;
  std::filesystem::path record = artifact;
  record += ".run.json";
  write_file_bytes(record, j.dump(2) + "\n");
}

}  // namespace fastprio::cli
