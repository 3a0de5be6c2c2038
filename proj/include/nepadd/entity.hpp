#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nepadd {

enum class EntityType { Org, Per, Loc };

// BIO tags over three entity types; the integer value is the class index.
enum class Tag : int { O = 0, BOrg = 1, IOrg = 2, BPer = 3, IPer = 4, BLoc = 5, ILoc = 6 };
inline constexpr int kTagCount = 7;

std::string_view entity_type_name(EntityType t);  // "ORG" | "PER" | "LOC"
EntityType parse_entity_type(std::string_view name);
std::string_view tag_name(Tag t);
Tag begin_tag(EntityType t);
Tag inside_tag(EntityType t);
std::optional<EntityType> tag_entity(Tag t);

// Half-open [start, end) span in frames or tokens.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  EntityType type = EntityType::Org;

  bool operator==(const EntitySpan&) const = default;
};

std::vector<Tag> tags_from_spans(std::size_t length, const std::vector<EntitySpan>& spans);
std::vector<EntitySpan> spans_from_tags(const std::vector<Tag>& tags);
// No I-X after O or after a different type.
bool is_well_formed(const std::vector<Tag>& tags);
// Turns every ill-formed I-X into B-X.
std::vector<Tag> repair_tags(std::vector<Tag> tags);

// Text markup: '{' ORG, '|' PER, '$' LOC open a span, ']' closes any span.
char entity_start_symbol(EntityType t);
inline constexpr char kEntityEndSymbol = ']';

struct AnnotatedToken {
  std::string word;
  std::optional<EntityType> entity;
};

// Spans index into `words`; overlapping or out-of-range spans throw.
std::string render_annotated_text(const std::vector<std::string>& words,
                                  const std::vector<EntitySpan>& spans);
// Runs of adjacent tokens sharing an entity type form one span.
std::string render_annotated_text(const std::vector<AnnotatedToken>& tokens);
// Per-token BIO tags -> markup; inverse of parse_annotated_text.
std::string render_tagged_words(const std::vector<std::string>& words, const std::vector<Tag>& tags);
std::pair<std::vector<std::string>, std::vector<Tag>> parse_annotated_text(std::string_view text);

}  // namespace nepadd
