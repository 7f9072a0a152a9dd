#pragma once

#include <iosfwd>
#include <string>

#include "radimpute/survey.hpp"

namespace radimpute {

// JSON-lines survey records:
//   {"t":float,"kind":"RP"|"RSSI","rp":[x,y]?,"rssi":{"<ap>":int}?}
// An optional "path" integer key groups records of one survey walk
// (absent means path 0).
SurveyTable read_survey_jsonl(std::istream& in);
SurveyTable read_survey_jsonl_file(const std::string& path);
void write_survey_jsonl(std::ostream& out, const SurveyTable& table);
void write_survey_jsonl_file(const std::string& path, const SurveyTable& table);

// JSON-lines radio map records:
//   {"t":float,"path":int,"rp":[x,y]|null,"fp":[int|null,...]}
RadioMap read_radio_map_jsonl(std::istream& in);
RadioMap read_radio_map_jsonl_file(const std::string& path);
void write_radio_map_jsonl(std::ostream& out, const RadioMap& map);
void write_radio_map_jsonl_file(const std::string& path, const RadioMap& map);

// Row-major integer CSV over {-1, 0, 1}.
MaskMatrix read_mask_csv(std::istream& in);
MaskMatrix read_mask_csv_file(const std::string& path);
void write_mask_csv(std::ostream& out, const MaskMatrix& mask);
void write_mask_csv_file(const std::string& path, const MaskMatrix& mask);

}  // namespace radimpute
