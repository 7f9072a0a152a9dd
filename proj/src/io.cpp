#include "radimpute/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace radimpute {

namespace {

using json = nlohmann::ordered_json;

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

}  // namespace

SurveyTable read_survey_jsonl(std::istream& in) {
  SurveyTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("survey line " + std::to_string(lineno) + ": " + e.what());
    }
    SurveyRecord rec;
    rec.time = j.at("t").get<double>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "RP") {
      rec.kind = RecordKind::kRp;
      const auto& rp = j.at("rp");
      rec.rp = Point2{rp.at(0).get<double>(), rp.at(1).get<double>()};
    } else if (kind == "RSSI") {
      rec.kind = RecordKind::kRssi;
      for (const auto& [key, val] : j.at("rssi").items()) {
        rec.rssi[std::stoi(key)] = val.get<int>();
      }
      if (rec.rssi.empty()) {
        throw std::runtime_error("survey line " + std::to_string(lineno) + ": empty rssi map");
      }
    } else {
      throw std::runtime_error("survey line " + std::to_string(lineno) + ": unknown kind " + kind);
    }
    if (j.contains("path")) rec.path = j.at("path").get<int>();
    table.push_back(std::move(rec));
  }
  return table;
}

void write_survey_jsonl(std::ostream& out, const SurveyTable& table) {
  for (const SurveyRecord& rec : table) {
    json j;
    j["t"] = rec.time;
    j["kind"] = rec.kind == RecordKind::kRp ? "RP" : "RSSI";
    if (rec.kind == RecordKind::kRp) {
      j["rp"] = {rec.rp->x, rec.rp->y};
    } else {
      json rssi = json::object();
      for (const auto& [ap, v] : rec.rssi) rssi[std::to_string(ap)] = v;
      j["rssi"] = std::move(rssi);
    }
    if (rec.path != 0) j["path"] = rec.path;
    out << j.dump() << '\n';
  }
}

RadioMap read_radio_map_jsonl(std::istream& in) {
  RadioMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("radio map line " + std::to_string(lineno) + ": " + e.what());
    }
    RadioMapRecord rec;
    rec.time = j.at("t").get<double>();
    rec.path_id = j.at("path").get<int>();
    if (!j.at("rp").is_null()) {
      rec.rp = Point2{j["rp"].at(0).get<double>(), j["rp"].at(1).get<double>()};
    }
    for (const auto& v : j.at("fp")) {
      if (v.is_null()) {
        rec.fingerprint.push_back(std::nullopt);
      } else {
        rec.fingerprint.push_back(v.get<int>());
      }
    }
    if (map.records.empty()) {
      map.num_aps = rec.fingerprint.size();
    } else if (rec.fingerprint.size() != map.num_aps) {
      throw std::runtime_error("radio map line " + std::to_string(lineno) +
                               ": fingerprint width differs from previous records");
    }
    map.records.push_back(std::move(rec));
  }
  return map;
}

void write_radio_map_jsonl(std::ostream& out, const RadioMap& map) {
  for (const RadioMapRecord& rec : map.records) {
    json j;
    j["t"] = rec.time;
    j["path"] = rec.path_id;
    if (rec.rp) {
      j["rp"] = {rec.rp->x, rec.rp->y};
    } else {
      j["rp"] = nullptr;
    }
    json fp = json::array();
    for (const auto& v : rec.fingerprint) {
      if (v) {
        fp.push_back(*v);
      } else {
        fp.push_back(nullptr);
      }
    }
    j["fp"] = std::move(fp);
    out << j.dump() << '\n';
  }
}

MaskMatrix read_mask_csv(std::istream& in) {
  std::vector<std::vector<std::int8_t>> rows;
  std::string line;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::int8_t> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const int v = std::stoi(cell);
      if (v < -1 || v > 1) throw std::runtime_error("mask cell outside {-1,0,1}");
      row.push_back(static_cast<std::int8_t>(v));
    }
    if (rows.empty()) {
      cols = row.size();
    } else if (row.size() != cols) {
      throw std::runtime_error("mask rows have differing widths");
    }
    rows.push_back(std::move(row));
  }
  MaskMatrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) m.set(i, j, rows[i][j]);
  }
  return m;
}

void write_mask_csv(std::ostream& out, const MaskMatrix& mask) {
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (j) out << ',';
      out << static_cast<int>(mask.at(i, j));
    }
    out << '\n';
  }
}

SurveyTable read_survey_jsonl_file(const std::string& path) {
  auto f = open_in(path);
  return read_survey_jsonl(f);
}
void write_survey_jsonl_file(const std::string& path, const SurveyTable& table) {
  auto f = open_out(path);
  write_survey_jsonl(f, table);
}
RadioMap read_radio_map_jsonl_file(const std::string& path) {
  auto f = open_in(path);
  return read_radio_map_jsonl(f);
}
void write_radio_map_jsonl_file(const std::string& path, const RadioMap& map) {
  auto f = open_out(path);
  write_radio_map_jsonl(f, map);
}
MaskMatrix read_mask_csv_file(const std::string& path) {
  auto f = open_in(path);
  return read_mask_csv(f);
}
void write_mask_csv_file(const std::string& path, const MaskMatrix& mask) {
  auto f = open_out(path);
  write_mask_csv(f, mask);
}

}  // namespace radimpute
