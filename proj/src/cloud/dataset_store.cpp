#include "edgeml/cloud/dataset_store.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "edgeml/cloud/registry.hpp"
#include "edgeml/common/error.hpp"

namespace edgeml::cloud {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxReportedErrors = 10;

std::vector<std::pair<std::size_t, std::string>> split_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) out.emplace_back(line_no, std::string(line));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

void check_id(std::string_view id) {
  if (!valid_name(id)) fail(ErrorKind::Domain, "invalid dataset id '" + std::string(id) + "'");
}

bool in_range(std::int64_t cycle, const CycleRange& r) {
  return (!r.from_cycle || cycle >= *r.from_cycle) && (!r.to_cycle || cycle <= *r.to_cycle);
}

}  // namespace

DatasetStore::DatasetStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(*dir_, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir_->string() + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(*dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ndjson") continue;
    const std::string id = entry.path().stem().string();
    if (!valid_name(id)) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot read " + entry.path().string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto lines = split_lines(text);
    // A crash mid-append can leave a partial last line; anything else is corruption.
    const UploadResult r = add(id, lines, false);
    if (r.rejected > 1 || (r.rejected == 1 && !text.empty() && text.back() == '\n'))
      fail(ErrorKind::Io, entry.path().string() + ": " + (r.errors.empty() ? "corrupt rows" : r.errors.front()));
    data_.try_emplace(id);
  }
}

UploadResult DatasetStore::add(std::string_view dataset_id,
                               const std::vector<std::pair<std::size_t, std::string>>& lines, bool persist) {
  UploadResult r;
  std::vector<std::pair<mlrt::SampleKey, std::string>> parsed;
  for (const auto& [line_no, line] : lines) {
    try {
      json row;
      try {
        row = json::parse(line);
      } catch (const json::parse_error& e) {
        fail(ErrorKind::Syntax, e.what());
      }
      mlrt::LabeledSample s = mlrt::labeled_sample_from_json(row);
      parsed.emplace_back(s.key, mlrt::to_json_row(s).dump());
    } catch (const Error& e) {
      ++r.rejected;
      if (r.errors.size() < kMaxReportedErrors) r.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  std::unique_lock lock(mu_);
  Dataset& ds = data_[std::string(dataset_id)];
  std::string appended;
  std::vector<mlrt::SampleKey> inserted_keys;
  for (auto& [key, row] : parsed) {
    auto [it, inserted] = ds.rows.try_emplace(key, row);
    if (!inserted) {
      ++r.duplicates;
      continue;
    }
    ++r.accepted;
    inserted_keys.push_back(key);
    if (persist) appended += row + "\n";
  }
  if (persist && dir_ && !appended.empty()) {
    const fs::path p = *dir_ / (std::string(dataset_id) + ".ndjson");
    std::ofstream out(p, std::ios::binary | std::ios::app);
    out << appended;
    out.flush();
    if (!out) {
      // Keep memory and disk in step: forget what was not written.
      for (const auto& key : inserted_keys) ds.rows.erase(key);
      fail(ErrorKind::Io, "cannot append to " + p.string());
    }
  }
  return r;
}

UploadResult DatasetStore::upload(std::string_view dataset_id, std::string_view ndjson) {
  check_id(dataset_id);
  return add(dataset_id, split_lines(ndjson), true);
}

UploadResult DatasetStore::upload(std::string_view dataset_id, const std::vector<mlrt::LabeledSample>& samples) {
  std::string text;
  for (const auto& s : samples) text += mlrt::to_json_row(s).dump() + "\n";
  return upload(dataset_id, text);
}

std::vector<mlrt::LabeledSample> DatasetStore::fetch(std::string_view dataset_id, const CycleRange& range) const {
  std::shared_lock lock(mu_);
  auto it = data_.find(dataset_id);
  if (it == data_.end()) fail(ErrorKind::NotFound, "unknown dataset '" + std::string(dataset_id) + "'");
  std::vector<mlrt::LabeledSample> out;
  for (const auto& [key, row] : it->second.rows)
    if (in_range(key.cycle_id, range)) out.push_back(mlrt::labeled_sample_from_json(json::parse(row)));
  return out;
}

std::string DatasetStore::fetch_ndjson(std::string_view dataset_id, const CycleRange& range) const {
  std::shared_lock lock(mu_);
  auto it = data_.find(dataset_id);
  if (it == data_.end()) fail(ErrorKind::NotFound, "unknown dataset '" + std::string(dataset_id) + "'");
  std::string out;
  for (const auto& [key, row] : it->second.rows)
    if (in_range(key.cycle_id, range)) out += row + "\n";
  return out;
}

std::vector<std::string> DatasetStore::datasets() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : data_) out.push_back(id);
  return out;
}

std::size_t DatasetStore::size(std::string_view dataset_id) const {
  std::shared_lock lock(mu_);
  auto it = data_.find(dataset_id);
  return it == data_.end() ? 0 : it->second.rows.size();
}

void to_json(json& j, const UploadResult& r) {
  j = {{"accepted", r.accepted}, {"duplicates", r.duplicates}, {"rejected", r.rejected}, {"errors", r.errors}};
}

}  // namespace edgeml::cloud
