/*
 * Copyright 2026 The fnmr-audit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Decision-level data model for multi-group FNMR studies.
//
// A study holds, per demographic group, the thresholded outcomes of every
// genuine comparison made for every subject (1 = false non-match). Scores and
// thresholds live upstream; only the bits are kept here.
//
// Within-group stationarity of the matching process is assumed and cannot be
// checked from decisions alone.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace fnmr {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Subject {
  std::string subject_id;
  std::vector<std::uint8_t> decisions;  // attempt order, values in {0,1}

  std::size_t attempts() const noexcept { return decisions.size(); }
  std::size_t errors() const noexcept {
    return static_cast<std::size_t>(
        std::count(decisions.begin(), decisions.end(), std::uint8_t{1}));
  }

  bool operator==(const Subject&) const = default;
};

struct GroupDataset {
  std::string group_id;
  std::vector<Subject> subjects;

  std::size_t n_subjects() const noexcept { return subjects.size(); }

  /// N_pi: total number of decisions in the group.
  std::size_t n_decisions() const noexcept {
    std::size_t total = 0;
    for (const auto& s : subjects) total += s.attempts();
    return total;
  }

  std::size_t n_errors() const noexcept {
    std::size_t total = 0;
    for (const auto& s : subjects) total += s.errors();
    return total;
  }

  void validate() const {
    if (subjects.empty()) {
      throw DataError("group '" + group_id + "' has no subjects");
    }
    std::set<std::string_view> seen;
    for (const auto& s : subjects) {
      if (s.decisions.empty()) {
        throw DataError("subject '" + s.subject_id + "' in group '" + group_id +
                        "' has no decisions");
      }
      for (auto d : s.decisions) {
        if (d > 1) {
          throw DataError("subject '" + s.subject_id +
                          "' has a non-binary decision");
        }
      }
      if (!seen.insert(s.subject_id).second) {
        throw DataError("subject '" + s.subject_id + "' repeated in group '" +
                        group_id + "'");
      }
    }
  }

  bool operator==(const GroupDataset&) const = default;
};

struct StudyDataset {
  std::vector<GroupDataset> groups;
  std::string provenance;

  std::size_t group_count() const noexcept { return groups.size(); }

  /// N: total decisions over all groups.
  std::size_t total_decisions() const noexcept {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.n_decisions();
    return total;
  }

  /// Structural checks. Requiring G >= 2 is left to the analyses.
  void validate() const {
    if (groups.empty()) throw DataError("study has no groups");
    std::set<std::string_view> group_ids;
    std::map<std::string_view, std::string_view> owner;
    for (const auto& g : groups) {
      if (!group_ids.insert(g.group_id).second) {
        throw DataError("duplicate group id '" + g.group_id + "'");
      }
      g.validate();
      for (const auto& s : g.subjects) {
        auto [it, inserted] = owner.emplace(s.subject_id, g.group_id);
        if (!inserted) {
          throw DataError("subject '" + s.subject_id +
                          "' appears in groups '" + std::string(it->second) +
                          "' and '" + g.group_id + "'");
        }
      }
    }
  }

  /// Equality ignores provenance; it is free-text metadata.
  bool operator==(const StudyDataset& other) const {
    return groups == other.groups;
  }
};

/// Column names used to locate the four required fields.
struct CsvSchema {
  std::string subject = "subject_id";
  std::string group = "group_id";
  std::string attempt = "attempt_index";
  std::string decision = "decision";
};

namespace detail {

// Splits RFC-4180 CSV text into records. Quoted fields may contain commas,
// doubled quotes and line breaks.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record.front().empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started || !field.empty()) {
          field.push_back(c);
        } else {
          in_quotes = true;
          field_started = true;
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') in.get(c);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field at end of input");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline std::string quote_csv(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(value);
  }
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string row_error(std::size_t row, const std::string& what) {
  return "row " + std::to_string(row) + ": " + what;
}

struct PendingSubject {
  std::string group_id;
  std::map<long long, std::uint8_t> by_attempt;
};

// Builds a canonical dataset from flat records: groups sorted by id,
// subjects by id, decisions by attempt index.
inline StudyDataset assemble(std::map<std::string, PendingSubject>&& pending,
                             std::string provenance) {
  std::map<std::string, GroupDataset> by_group;
  for (auto& [subject_id, p] : pending) {
    auto& group = by_group[p.group_id];
    group.group_id = p.group_id;
    Subject s{subject_id, {}};
    s.decisions.reserve(p.by_attempt.size());
    for (const auto& [attempt, decision] : p.by_attempt) {
      s.decisions.push_back(decision);
    }
    group.subjects.push_back(std::move(s));
  }
  StudyDataset study;
  study.provenance = std::move(provenance);
  for (auto& [id, group] : by_group) study.groups.push_back(std::move(group));
  study.validate();
  return study;
}

struct FlatRecord {
  std::string subject_id;
  std::string group_id;
  long long attempt_index;
  int decision;
};

// Accumulates one record; `row` is the 1-based data row used in messages.
inline void add_record(std::map<std::string, PendingSubject>& pending,
                       const FlatRecord& r, std::size_t row) {
  auto [it, inserted] = pending.try_emplace(r.subject_id);
  if (inserted) {
    it->second.group_id = r.group_id;
  } else if (it->second.group_id != r.group_id) {
    throw DataError(row_error(row, "subject '" + r.subject_id +
                                       "' appears in groups '" +
                                       it->second.group_id + "' and '" +
                                       r.group_id + "'"));
  }
  if (!it->second.by_attempt
           .emplace(r.attempt_index, static_cast<std::uint8_t>(r.decision))
           .second) {
    throw DataError(row_error(row, "duplicate attempt " +
                                       std::to_string(r.attempt_index) +
                                       " for subject '" + r.subject_id + "'"));
  }
}

inline long long parse_attempt(const std::string& text, std::size_t row) {
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || value < 1) {
    throw DataError(
        row_error(row, "attempt_index must be an integer >= 1, got '" + text + "'"));
  }
  return value;
}

inline int parse_decision(const std::string& text, std::size_t row) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw DataError(row_error(row, "decision must be 0 or 1, got '" + text + "'"));
}

}  // namespace detail

/// Reads decision records from CSV text. The returned dataset is canonical
/// (sorted) and validated; it may hold a single group.
inline StudyDataset ingest_csv(std::istream& in, const CsvSchema& schema = {},
                               std::string provenance = {}) {
  auto records = detail::parse_csv(in);
  if (records.empty()) throw DataError("empty CSV input");
  const auto& header = records.front();
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("missing column '" + name + "' in CSV header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t subject_col = column(schema.subject);
  const std::size_t group_col = column(schema.group);
  const std::size_t attempt_col = column(schema.attempt);
  const std::size_t decision_col = column(schema.decision);
  if (records.size() == 1) throw DataError("CSV has a header but no rows");

  std::map<std::string, detail::PendingSubject> pending;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& fields = records[r];
    auto field = [&](std::size_t col, const std::string& name) -> const std::string& {
      if (col >= fields.size() || fields[col].empty()) {
        throw DataError(detail::row_error(r, "missing field '" + name + "'"));
      }
      return fields[col];
    };
    detail::FlatRecord rec{
        field(subject_col, schema.subject), field(group_col, schema.group),
        detail::parse_attempt(field(attempt_col, schema.attempt), r),
        detail::parse_decision(field(decision_col, schema.decision), r)};
    detail::add_record(pending, rec, r);
  }
  return detail::assemble(std::move(pending), std::move(provenance));
}

inline StudyDataset ingest_csv(const std::string& path,
                               const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return ingest_csv(in, schema, "source: " + path);
}

/// Canonical CSV. Attempt indices are written as 1..m_i in stored order.
inline void write_csv(const StudyDataset& study, std::ostream& out) {
  study.validate();
  std::vector<const GroupDataset*> groups;
  for (const auto& g : study.groups) groups.push_back(&g);
  std::sort(groups.begin(), groups.end(),
            [](auto* a, auto* b) { return a->group_id < b->group_id; });
  out << "subject_id,group_id,attempt_index,decision\n";
  for (const auto* g : groups) {
    std::vector<const Subject*> subjects;
    for (const auto& s : g->subjects) subjects.push_back(&s);
    std::sort(subjects.begin(), subjects.end(),
              [](auto* a, auto* b) { return a->subject_id < b->subject_id; });
    const std::string group_field = detail::quote_csv(g->group_id);
    for (const auto* s : subjects) {
      const std::string subject_field = detail::quote_csv(s->subject_id);
      for (std::size_t j = 0; j < s->decisions.size(); ++j) {
        out << subject_field << ',' << group_field << ',' << (j + 1) << ','
            << static_cast<int>(s->decisions[j]) << '\n';
      }
    }
  }
}

inline void write_csv(const StudyDataset& study, const std::string& path) {
  study.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(study, out);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

/// Sorts groups and subjects into canonical order.
inline StudyDataset canonicalize(StudyDataset study) {
  std::sort(study.groups.begin(), study.groups.end(),
            [](const auto& a, const auto& b) { return a.group_id < b.group_id; });
  for (auto& g : study.groups) {
    std::sort(g.subjects.begin(), g.subjects.end(),
              [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
  }
  return study;
}

// JSON mirror: {"provenance": "...", "records": [{subject_id, group_id,
// attempt_index, decision}, ...]}

inline nlohmann::json to_json(const StudyDataset& study) {
  study.validate();
  const StudyDataset canonical = canonicalize(study);
  nlohmann::json records = nlohmann::json::array();
  for (const auto& g : canonical.groups) {
    for (const auto& s : g.subjects) {
      for (std::size_t j = 0; j < s.decisions.size(); ++j) {
        records.push_back({{"subject_id", s.subject_id},
                           {"group_id", g.group_id},
                           {"attempt_index", j + 1},
                           {"decision", static_cast<int>(s.decisions[j])}});
      }
    }
  }
  return {{"provenance", study.provenance}, {"records", std::move(records)}};
}

inline StudyDataset study_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("records") || !doc["records"].is_array()) {
    throw DataError("JSON study must be an object with a 'records' array");
  }
  if (doc["records"].empty()) throw DataError("JSON study has no records");
  std::map<std::string, detail::PendingSubject> pending;
  std::size_t row = 0;
  for (const auto& item : doc["records"]) {
    ++row;
    auto text = [&](const char* key) {
      if (!item.contains(key) || !item[key].is_string() ||
          item[key].get_ref<const std::string&>().empty()) {
        throw DataError(detail::row_error(row, std::string("missing field '") + key + "'"));
      }
      return item[key].get<std::string>();
    };
    auto integer = [&](const char* key) {
      if (!item.contains(key) || !item[key].is_number_integer()) {
        throw DataError(detail::row_error(row, std::string("missing field '") + key + "'"));
      }
      return item[key].get<long long>();
    };
    const long long attempt = integer("attempt_index");
    if (attempt < 1) {
      throw DataError(detail::row_error(row, "attempt_index must be >= 1"));
    }
    const long long decision = integer("decision");
    if (decision != 0 && decision != 1) {
      throw DataError(detail::row_error(row, "decision must be 0 or 1"));
    }
    detail::add_record(pending,
                       {text("subject_id"), text("group_id"), attempt,
                        static_cast<int>(decision)},
                       row);
  }
  return detail::assemble(std::move(pending), doc.value("provenance", ""));
}

}  // namespace fnmr
