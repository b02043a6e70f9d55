// SPDX-License-Identifier: Apache-2.0
#include "hierpath/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "hierpath/error.hpp"
#include "hierpath/io.hpp"
#include "hierpath/rng.hpp"

namespace hierpath {

bool is_valid_code(std::string_view code) {
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  return code.size() == 5 && code[0] == 'C' && digit(code[1]) && digit(code[2]) &&
         code[3] == '.' && digit(code[4]);
}

CorpusFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".xml") return CorpusFormat::xml;
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::jsonl;
  throw ContractError("cannot infer corpus format from extension of " + path.string());
}

namespace {

void check_unique(std::vector<Report>& out, std::unordered_set<std::string>& seen) {
  const auto& id = out.back().id;
  if (!seen.insert(id).second) throw ContractError("duplicate report id '" + id + "'");
}

}  // namespace

std::vector<Report> parse_reports_jsonl(std::string_view content) {
  std::vector<Report> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ContractError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw ContractError(where + "record is not an object");
    auto id = obj.find("id");
    auto text = obj.find("text");
    if (id == obj.end() || !id->is_string() || id->get<std::string>().empty())
      throw ContractError(where + "missing or empty string field 'id'");
    if (text == obj.end() || !text->is_string())
      throw ContractError(where + "missing string field 'text'");
    Report r{id->get<std::string>(), text->get<std::string>(), std::nullopt};
    if (auto code = obj.find("code"); code != obj.end() && !code->is_null()) {
      if (!code->is_string() || !is_valid_code(code->get<std::string>()))
        throw ContractError(where + "invalid ICD-O code " + code->dump());
      r.label = code->get<std::string>();
    }
    out.push_back(std::move(r));
    check_unique(out, seen);
  }
  return out;
}

std::vector<Report> parse_reports_xml(std::string_view content) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(content)};
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ContractError("malformed XML at line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::vector<Report> out;
  std::unordered_set<std::string> seen;
  auto root = tree.get_child_optional("reports");
  if (!root) {
    if (tree.empty()) return out;
    throw ContractError("XML root element must be <reports>");
  }
  std::size_t index = 0;
  for (const auto& [name, node] : *root) {
    if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
    const auto where = "record " + std::to_string(index + 1) + ": ";
    if (name != "report") throw ContractError(where + "unexpected element <" + name + ">");
    auto id = node.get_optional<std::string>("<xmlattr>.id");
    if (!id || id->empty()) throw ContractError(where + "missing id attribute");
    auto text = node.get_child_optional("text");
    if (!text) throw ContractError(where + "missing <text> element");
    Report r{*id, text->get_value<std::string>(), std::nullopt};
    if (auto code = node.get_optional<std::string>("code")) {
      if (!is_valid_code(*code)) throw ContractError(where + "invalid ICD-O code '" + *code + "'");
      r.label = *code;
    }
    out.push_back(std::move(r));
    check_unique(out, seen);
    ++index;
  }
  return out;
}

std::vector<Report> load_reports(const std::filesystem::path& path, CorpusFormat format) {
  const auto content = read_file(path);
  return format == CorpusFormat::xml ? parse_reports_xml(content) : parse_reports_jsonl(content);
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string serialize_reports(std::span<const Report> reports, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::jsonl) {
    for (const auto& r : reports) {
      nlohmann::ordered_json obj;
      obj["id"] = r.id;
      obj["text"] = r.text;
      if (r.label) obj["code"] = *r.label;
      out += obj.dump();
      out += '\n';
    }
    return out;
  }
  out += "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<reports>\n";
  for (const auto& r : reports) {
    out += "  <report id=\"" + xml_escape(r.id) + "\"><text>" + xml_escape(r.text) + "</text>";
    if (r.label) out += "<code>" + xml_escape(*r.label) + "</code>";
    out += "</report>\n";
  }
  out += "</reports>\n";
  return out;
}

void write_reports(const std::filesystem::path& path, std::span<const Report> reports,
                   CorpusFormat format) {
  write_file(path, serialize_reports(reports, format));
}

LabelSchema LabelSchema::breast_topography() {
  return {{"C50.0", "C50.1", "C50.2", "C50.3", "C50.4", "C50.5", "C50.6", "C50.8", "C50.9"}, 200};
}

std::optional<std::size_t> LabelSchema::index_of(std::string_view code) const {
  auto it = std::find(codes.begin(), codes.end(), code);
  if (it == codes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - codes.begin());
}

std::map<std::string, std::size_t> count_labels(std::span<const Report> reports) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : reports) {
    if (!r.label) throw ContractError("report '" + r.id + "' has no label");
    ++counts[*r.label];
  }
  return counts;
}

PolicyResult apply_class_policy(std::span<const Report> reports, const LabelSchema& schema) {
  for (const auto& r : reports) {
    if (!r.label) throw ContractError("report '" + r.id + "' has no label");
    if (!schema.index_of(*r.label))
      throw ContractError("label '" + *r.label + "' of report '" + r.id + "' is outside the schema");
  }
  const auto counts = count_labels(reports);
  PolicyResult result;
  std::set<std::string> excluded;
  for (const auto& code : schema.codes) {
    auto it = counts.find(code);
    if ((it == counts.end() ? 0 : it->second) <= schema.min_count) excluded.insert(code);
  }
  for (const auto& r : reports)
    if (!excluded.count(*r.label)) result.kept.push_back(r);
  result.excluded_codes.assign(excluded.begin(), excluded.end());
  return result;
}

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "validation";
    case Partition::test: return "test";
  }
  return "?";
}

Partition parse_partition(std::string_view name) {
  if (name == "train") return Partition::train;
  if (name == "validation") return Partition::validation;
  if (name == "test") return Partition::test;
  throw ContractError("unknown partition '" + std::string(name) + "'");
}

const std::vector<std::string>& DatasetSplit::ids(Partition p) const {
  switch (p) {
    case Partition::train: return train;
    case Partition::validation: return validation;
    default: return test;
  }
}

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> ratios) {
  std::vector<std::size_t> alloc(ratios.size());
  std::vector<double> frac(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double quota = static_cast<double>(n) * ratios[i];
    alloc[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    frac[i] = quota - static_cast<double>(alloc[i]);
    assigned += alloc[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++alloc[order[i % order.size()]];
  return alloc;
}

namespace {

// Ids per class (sorted by code), each list in input order.
std::map<std::string, std::vector<std::string>> ids_by_class(std::span<const Report> reports) {
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& r : reports) {
    if (!r.label) throw ContractError("report '" + r.id + "' has no label");
    by_class[*r.label].push_back(r.id);
  }
  return by_class;
}

}  // namespace

DatasetSplit stratified_split(std::span<const Report> reports, const SplitRatios& ratios,
                              std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || *std::min_element(ratios.begin(), ratios.end()) < 0.0)
    throw ContractError("split ratios must be non-negative and sum to 1");
  Rng rng(seed);
  std::unordered_map<std::string, Partition> where;
  for (auto& [code, ids] : ids_by_class(reports)) {
    if (ids.size() < 3)
      throw ContractError("class " + code + " has " + std::to_string(ids.size()) +
                          " reports; at least 3 are required to split");
    shuffle(std::span<std::string>(ids), rng);
    const auto alloc = largest_remainder(ids.size(), ratios);
    if (alloc[0] == 0) throw ContractError("class " + code + " receives no training reports");
    std::size_t i = 0;
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t c = 0; c < alloc[p]; ++c) where[ids[i++]] = static_cast<Partition>(p);
  }
  DatasetSplit split;
  split.ratios = ratios;
  for (const auto& r : reports) {
    switch (where.at(r.id)) {
      case Partition::train: split.train.push_back(r.id); break;
      case Partition::validation: split.validation.push_back(r.id); break;
      case Partition::test: split.test.push_back(r.id); break;
    }
  }
  return split;
}

std::string serialize_split(const DatasetSplit& split) {
  std::ostringstream out;
  out.precision(17);
  out << "#ratios=" << split.ratios[0] << "," << split.ratios[1] << "," << split.ratios[2] << "\n";
  for (auto p : {Partition::train, Partition::validation, Partition::test})
    for (const auto& id : split.ids(p)) out << id << '\t' << partition_name(p) << '\n';
  return out.str();
}

DatasetSplit parse_split(std::string_view content) {
  DatasetSplit split;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("#ratios=", 0) == 0) {
      std::istringstream r(line.substr(8));
      char comma = 0;
      r >> split.ratios[0] >> comma >> split.ratios[1] >> comma >> split.ratios[2];
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ContractError("split file line " + std::to_string(line_no) + ": expected id<TAB>partition");
    auto id = line.substr(0, tab);
    switch (parse_partition(line.substr(tab + 1))) {
      case Partition::train: split.train.push_back(id); break;
      case Partition::validation: split.validation.push_back(id); break;
      case Partition::test: split.test.push_back(id); break;
    }
  }
  return split;
}

std::vector<std::string> FoldPlan::ids_in_fold(std::size_t fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignment)
    if (f == fold) ids.push_back(id);
  return ids;
}

FoldPlan make_folds(std::span<const Report> reports, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("k must be at least 2");
  Rng rng(seed);
  FoldPlan plan;
  plan.k = k;
  std::size_t offset = 0;
  for (auto& [code, ids] : ids_by_class(reports)) {
    if (ids.size() < k)
      throw ContractError("class " + code + " has " + std::to_string(ids.size()) +
                          " reports, fewer than k=" + std::to_string(k));
    shuffle(std::span<std::string>(ids), rng);
    for (std::size_t i = 0; i < ids.size(); ++i) plan.assignment[ids[i]] = (offset + i) % k;
    offset = (offset + ids.size()) % k;
  }
  return plan;
}

std::vector<Report> select_reports(std::span<const Report> reports,
                                   std::span<const std::string> ids) {
  std::unordered_map<std::string_view, const Report*> by_id;
  for (const auto& r : reports) by_id.emplace(r.id, &r);
  std::vector<Report> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("unknown report id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace hierpath
