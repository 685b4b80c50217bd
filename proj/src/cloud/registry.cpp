#include "edgeml/cloud/registry.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "edgeml/boost/portable.hpp"
#include "edgeml/common/clock.hpp"
#include "edgeml/common/error.hpp"

namespace edgeml::cloud {

namespace fs = std::filesystem;
using nlohmann::json;

bool valid_name(std::string_view name) {
  if (name.empty() || name.size() > 128 || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

namespace {

Lineage lineage_of(const boost::ModelMetadata& m) { return {m.dataset_id, m.run_id, m.parent_version, m.trained_at}; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::optional<std::int64_t> version_of_file(const fs::path& p) {
  const std::string f = p.filename().string();
  if (f.size() < 7 || f.front() != 'v' || !f.ends_with(".json")) return std::nullopt;
  const std::string digits = f.substr(1, f.size() - 6);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  return std::stoll(digits);
}

}  // namespace

ModelRegistry::ModelRegistry(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(*dir_, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir_->string() + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(*dir_)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (!valid_name(name)) continue;
    std::map<std::int64_t, fs::path> files;
    for (const auto& f : fs::directory_iterator(entry.path()))
      if (auto v = version_of_file(f.path())) files[*v] = f.path();
    if (files.empty()) continue;
    auto fam = std::make_unique<Family>();
    std::int64_t expect = 1;
    for (const auto& [v, path] : files) {
      if (v != expect) fail(ErrorKind::Io, "model " + name + " is missing version " + std::to_string(expect));
      ++expect;
      std::string text = read_file(path);
      boost::PortableModel pm;
      try {
        pm = boost::parse(text);
      } catch (const Error& e) {
        fail(ErrorKind::Io, path.string() + ": " + e.what());
      }
      fam->versions.push_back({name, v, std::move(text), lineage_of(pm.metadata)});
    }
    families_.emplace(name, std::move(fam));
  }
}

ModelRegistry::Family& ModelRegistry::family(std::string_view name) {
  {
    std::shared_lock lock(mu_);
    if (auto it = families_.find(name); it != families_.end()) return *it->second;
  }
  std::unique_lock lock(mu_);
  auto [it, _] = families_.try_emplace(std::string(name), std::make_unique<Family>());
  return *it->second;
}

const ModelRegistry::Family* ModelRegistry::find(std::string_view name) const {
  auto it = families_.find(name);
  return it == families_.end() ? nullptr : it->second.get();
}

std::int64_t ModelRegistry::put(std::string_view name, std::string_view document) {
  if (!valid_name(name)) fail(ErrorKind::Domain, "invalid model name '" + std::string(name) + "'");
  boost::PortableModel pm = boost::parse(document);
  Family& fam = family(name);
  std::lock_guard put_lock(fam.put_mu);
  std::int64_t version;
  {
    std::shared_lock lock(mu_);
    version = static_cast<std::int64_t>(fam.versions.size()) + 1;
  }
  pm.metadata.name = std::string(name);
  pm.metadata.version = version;
  if (pm.metadata.trained_at.empty()) pm.metadata.trained_at = utc_now_iso();
  RegistryEntry entry{std::string(name), version, boost::serialize(pm), lineage_of(pm.metadata)};
  if (dir_) {
    const fs::path d = *dir_ / entry.name;
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + d.string() + ": " + ec.message());
    write_file_atomic(d / ("v" + std::to_string(version) + ".json"), entry.document);
  }
  std::unique_lock lock(mu_);
  fam.versions.push_back(std::move(entry));
  return version;
}

RegistryEntry ModelRegistry::get(std::string_view name, std::optional<std::int64_t> version) const {
  std::shared_lock lock(mu_);
  const Family* fam = find(name);
  if (!fam || fam->versions.empty()) fail(ErrorKind::NotFound, "unknown model '" + std::string(name) + "'");
  if (!version) return fam->versions.back();
  if (*version < 1 || *version > static_cast<std::int64_t>(fam->versions.size()))
    fail(ErrorKind::NotFound, "model '" + std::string(name) + "' has no version " + std::to_string(*version));
  return fam->versions[static_cast<std::size_t>(*version - 1)];
}

std::vector<RegistryEntry> ModelRegistry::list(std::string_view name) const {
  std::shared_lock lock(mu_);
  std::vector<RegistryEntry> out;
  if (const Family* fam = find(name))
    for (const auto& e : fam->versions) out.push_back({e.name, e.version, {}, e.lineage});
  return out;
}

std::vector<std::string> ModelRegistry::names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, fam] : families_)
    if (!fam->versions.empty()) out.push_back(name);
  return out;
}

void to_json(json& j, const Lineage& l) {
  j = {{"dataset_id", l.dataset_id},
       {"run_id", l.run_id},
       {"parent_version", l.parent_version ? json(*l.parent_version) : json(nullptr)},
       {"trained_at", l.trained_at}};
}

json summary_json(const RegistryEntry& e) { return {{"name", e.name}, {"version", e.version}, {"lineage", e.lineage}}; }

}  // namespace edgeml::cloud
