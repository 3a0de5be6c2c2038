#include "nepadd/entity.hpp"

#include <algorithm>
#include <sstream>

#include "nepadd/errors.hpp"

namespace nepadd {

std::string_view entity_type_name(EntityType t) {
  switch (t) {
    case EntityType::Org: return "ORG";
    case EntityType::Per: return "PER";
    case EntityType::Loc: return "LOC";
  }
  return "?";
}

EntityType parse_entity_type(std::string_view name) {
  if (name == "ORG") return EntityType::Org;
  if (name == "PER") return EntityType::Per;
  if (name == "LOC") return EntityType::Loc;
  throw DataError("unknown entity type '" + std::string(name) + "'");
}

std::string_view tag_name(Tag t) {
  static constexpr std::string_view names[] = {"O", "B-ORG", "I-ORG", "B-PER", "I-PER", "B-LOC", "I-LOC"};
  return names[static_cast<int>(t)];
}

Tag begin_tag(EntityType t) { return static_cast<Tag>(1 + 2 * static_cast<int>(t)); }
Tag inside_tag(EntityType t) { return static_cast<Tag>(2 + 2 * static_cast<int>(t)); }

std::optional<EntityType> tag_entity(Tag t) {
  if (t == Tag::O) return std::nullopt;
  return static_cast<EntityType>((static_cast<int>(t) - 1) / 2);
}

namespace {
bool is_inside(Tag t) { return t != Tag::O && static_cast<int>(t) % 2 == 0; }
}  // namespace

std::vector<Tag> tags_from_spans(std::size_t length, const std::vector<EntitySpan>& spans) {
  std::vector<Tag> tags(length, Tag::O);
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) throw DataError("entity span out of range");
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (tags[i] != Tag::O) throw DataError("overlapping entity spans");
      tags[i] = i == s.start ? begin_tag(s.type) : inside_tag(s.type);
    }
  }
  return tags;
}

std::vector<EntitySpan> spans_from_tags(const std::vector<Tag>& tags) {
  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto type = tag_entity(tags[i]);
    if (!type) continue;
    const bool continues = is_inside(tags[i]) && !spans.empty() && spans.back().end == i &&
                           spans.back().type == *type;
    if (continues) {
      spans.back().end = i + 1;
    } else {
      spans.push_back({i, i + 1, *type});
    }
  }
  return spans;
}

bool is_well_formed(const std::vector<Tag>& tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!is_inside(tags[i])) continue;
    if (i == 0 || tag_entity(tags[i - 1]) != tag_entity(tags[i])) return false;
  }
  return true;
}

std::vector<Tag> repair_tags(std::vector<Tag> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!is_inside(tags[i])) continue;
    if (i == 0 || tag_entity(tags[i - 1]) != tag_entity(tags[i])) tags[i] = begin_tag(*tag_entity(tags[i]));
  }
  return tags;
}

char entity_start_symbol(EntityType t) {
  switch (t) {
    case EntityType::Org: return '{';
    case EntityType::Per: return '|';
    case EntityType::Loc: return '$';
  }
  return '?';
}

std::string render_annotated_text(const std::vector<std::string>& words,
                                  const std::vector<EntitySpan>& spans) {
  std::vector<EntitySpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].start >= sorted[i].end || sorted[i].end > words.size()) {
      throw DataError("entity span out of range of " + std::to_string(words.size()) + " tokens");
    }
    if (i > 0 && sorted[i].start < sorted[i - 1].end) throw DataError("overlapping entity spans");
  }
  std::ostringstream os;
  std::size_t next = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) os << ' ';
    const bool opens = next < sorted.size() && sorted[next].start == i;
    if (opens) os << entity_start_symbol(sorted[next].type);
    os << words[i];
    if (next < sorted.size() && sorted[next].end == i + 1) {
      os << kEntityEndSymbol;
      ++next;
    }
  }
  return os.str();
}

std::string render_annotated_text(const std::vector<AnnotatedToken>& tokens) {
  std::vector<std::string> words;
  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    words.push_back(tokens[i].word);
    if (!tokens[i].entity) continue;
    if (!spans.empty() && spans.back().end == i && spans.back().type == *tokens[i].entity) {
      spans.back().end = i + 1;
    } else {
      spans.push_back({i, i + 1, *tokens[i].entity});
    }
  }
  return render_annotated_text(words, spans);
}

std::string render_tagged_words(const std::vector<std::string>& words, const std::vector<Tag>& tags) {
  if (words.size() != tags.size()) throw DataError("word/tag length mismatch");
  if (!is_well_formed(tags)) throw DataError("ill-formed tag sequence");
  return render_annotated_text(words, spans_from_tags(tags));
}

std::pair<std::vector<std::string>, std::vector<Tag>> parse_annotated_text(std::string_view text) {
  std::vector<std::string> words;
  std::vector<Tag> tags;
  std::optional<EntityType> open;
  bool open_has_word = false;
  std::istringstream is{std::string(text)};
  std::string raw;
  while (is >> raw) {
    std::string_view w = raw;
    if (!w.empty() && (w.front() == '{' || w.front() == '|' || w.front() == '$')) {
      if (open) throw DataError("nested entity markup in '" + std::string(text) + "'");
      open = w.front() == '{' ? EntityType::Org : w.front() == '|' ? EntityType::Per : EntityType::Loc;
      open_has_word = false;
      w.remove_prefix(1);
    }
    bool closes = false;
    if (!w.empty() && w.back() == kEntityEndSymbol) {
      if (!open) throw DataError("unmatched ']' in '" + std::string(text) + "'");
      closes = true;
      w.remove_suffix(1);
    }
    if (w.empty()) throw DataError("empty token in annotated text");
    words.emplace_back(w);
    if (open) {
      tags.push_back(open_has_word ? inside_tag(*open) : begin_tag(*open));
      open_has_word = true;
    } else {
      tags.push_back(Tag::O);
    }
    if (closes) open.reset();
  }
  if (open) throw DataError("unterminated entity in '" + std::string(text) + "'");
  return {words, tags};
}

}  // namespace nepadd
