#include "dff/checkpoint.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "dff/json_io.hpp"

namespace dff {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'D', 'F', 'F', 'C'};

class PathLock {
 public:
  explicit PathLock(fs::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw std::runtime_error("checkpoint: " + path_.string() + " is locked by another writer");
  }
  ~PathLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  PathLock(const PathLock&) = delete;
  PathLock& operator=(const PathLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

template <typename V>
void append(std::vector<unsigned char>& out, const V& value) {
  const auto* p = reinterpret_cast<const unsigned char*>(&value);
  out.insert(out.end(), p, p + sizeof(V));
}

}  // namespace

void save_checkpoint(const SceneModel& scene, const fs::path& path) {
  Json header;
  header["coarse"] = field_config_to_json(scene.coarse.config());
  header["fine"] = field_config_to_json(scene.fine.config());
  header["feature_pass"] = to_string(scene.feature_pass);
  header["background"] = vec3_to_json(scene.background);
  header["near"] = scene.near;
  header["far"] = scene.far;
  header["train_config"] = train_config_to_json(scene.train_config);
  header["iteration"] = scene.iteration;
  header["rng_state"] = scene.rng_state;
  header["queries"] = Json::parse(scene.queries.to_json());
  header["coarse_params"] = scene.coarse.parameters().size();
  header["fine_params"] = scene.fine.parameters().size();
  const std::string text = header.dump();

  std::vector<unsigned char> bytes(kMagic, kMagic + 4);
  append(bytes, kCheckpointVersion);
  append(bytes, static_cast<std::uint64_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (const auto* field : {&scene.coarse, &scene.fine}) {
    const auto params = field->parameters();
    const auto* p = reinterpret_cast<const unsigned char*>(params.data());
    bytes.insert(bytes.end(), p, p + params.size() * sizeof(float));
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  PathLock lock(fs::path(path.string() + ".lock"));
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

SceneModel load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("missing checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw LoadError(name + ": not a checkpoint (bad magic)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion)
    throw LoadError(name + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  std::uint64_t header_len;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (16 + header_len > bytes.size()) throw LoadError(name + ": truncated header");
  Json header;
  try {
    header = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(name + ": corrupt header: " + e.what());
  }
  try {
    SceneModel scene(field_config_from_json(header.at("coarse")), field_config_from_json(header.at("fine")));
    scene.feature_pass = pass_from_string(header.at("feature_pass").get<std::string>());
    scene.background = vec3_from_json(header.at("background"));
    scene.near = header.at("near").get<double>();
    scene.far = header.at("far").get<double>();
    scene.train_config = train_config_from_json(header.at("train_config"));
    scene.iteration = header.at("iteration").get<long>();
    scene.rng_state = header.at("rng_state").get<std::string>();
    scene.queries = QueryEmbeddingTable::from_json(header.at("queries").dump());
    const auto n_coarse = header.at("coarse_params").get<std::size_t>();
    const auto n_fine = header.at("fine_params").get<std::size_t>();
    std::size_t offset = 16 + header_len;
    if (bytes.size() != offset + (n_coarse + n_fine) * sizeof(float))
      throw LoadError(name + ": parameter blob size does not match header");
    for (auto* field : {&scene.coarse, &scene.fine}) {
      const std::size_t n = field == &scene.coarse ? n_coarse : n_fine;
      std::vector<float> values(n);
      std::memcpy(values.data(), bytes.data() + offset, n * sizeof(float));
      offset += n * sizeof(float);
      field->set_parameters(values);
    }
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(name + ": " + e.what());
  } catch (const StructuralError& e) {
    throw LoadError(name + ": " + e.what());
  } catch (const InputError& e) {
    throw LoadError(name + ": " + e.what());
  }
}

}  // namespace dff
