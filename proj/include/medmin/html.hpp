#pragma once

// A forgiving HTML tree builder. It covers the subset needed to read
// encyclopedia infoboxes and link lists: tags, attributes, comments, raw-text
// elements, entities and the common implied end tags. Any byte sequence
// parses to some tree; nothing here throws on bad markup.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medmin/text.hpp"

namespace medmin::html {

struct Node {
  enum class Kind { Element, Text };
  Kind kind = Kind::Element;
  std::string tag;   // lowercase; empty for text and the document root
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string text;  // decoded text for Kind::Text
  Node* parent = nullptr;
  std::vector<std::unique_ptr<Node>> children;

  bool is_element() const { return kind == Kind::Element; }

  const std::string* attr(std::string_view name) const {
    for (const auto& [k, v] : attrs)
      if (k == name) return &v;
    return nullptr;
  }

  bool has_class(std::string_view cls) const {
    const auto* c = attr("class");
    if (!c) return false;
    std::size_t i = 0;
    while (i < c->size()) {
      while (i < c->size() && text::is_space((*c)[i])) ++i;
      std::size_t j = i;
      while (j < c->size() && !text::is_space((*c)[j])) ++j;
      if (std::string_view(*c).substr(i, j - i) == cls) return true;
      i = j;
    }
    return false;
  }

  bool has_id(std::string_view id) const {
    const auto* v = attr("id");
    return v && *v == id;
  }
};

class Document {
 public:
  explicit Document(std::string_view source);

  const Node& root() const { return *root_; }

 private:
  std::unique_ptr<Node> root_;
};

/// Pre-order walk. Returning false from `visit` skips that node's subtree.
inline void walk(const Node& start, const std::function<bool(const Node&)>& visit) {
  std::vector<const Node*> stack{&start};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!visit(*n)) continue;
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(it->get());
  }
}

inline std::vector<const Node*> find_all(const Node& start,
                                         const std::function<bool(const Node&)>& pred) {
  std::vector<const Node*> out;
  walk(start, [&](const Node& n) {
    if (&n != &start && pred(n)) out.push_back(&n);
    return true;
  });
  return out;
}

inline const Node* find_first(const Node& start, const std::function<bool(const Node&)>& pred) {
  const Node* found = nullptr;
  walk(start, [&](const Node& n) {
    if (found) return false;
    if (&n != &start && pred(n)) {
      found = &n;
      return false;
    }
    return true;
  });
  return found;
}

/// Concatenated descendant text, whitespace collapsed.
inline std::string text_content(const Node& n) {
  std::string out;
  walk(n, [&](const Node& c) {
    if (c.kind == Node::Kind::Text) out += c.text;
    if (c.tag == "br") out += ' ';
    return true;
  });
  return text::collapse_ws(out);
}

namespace detail {

inline bool is_void(std::string_view tag) {
  static constexpr std::string_view kVoid[] = {"area", "base",  "br",   "col",   "embed",
                                               "hr",   "img",   "input", "link", "meta",
                                               "param", "source", "track", "wbr"};
  for (auto v : kVoid)
    if (v == tag) return true;
  return false;
}

inline bool is_raw_text(std::string_view tag) {
  return tag == "script" || tag == "style" || tag == "textarea" || tag == "title";
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace detail

/// Decodes named (common subset) and numeric character references.
inline std::string decode_entities(std::string_view s) {
  static constexpr std::pair<std::string_view, std::string_view> kNamed[] = {
      {"amp", "&"},       {"lt", "<"},        {"gt", ">"},        {"quot", "\""},
      {"apos", "'"},      {"nbsp", " "},      {"ndash", "\xE2\x80\x93"}, {"mdash", "\xE2\x80\x94"},
      {"hellip", "\xE2\x80\xA6"}, {"rsquo", "\xE2\x80\x99"}, {"lsquo", "\xE2\x80\x98"}, {"rdquo", "\xE2\x80\x9D"},
      {"ldquo", "\xE2\x80\x9C"}, {"middot", "\xC2\xB7"}, {"deg", "\xC2\xB0"}};
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out.push_back(s[i++]);
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(s[i++]);
      continue;
    }
    const auto name = s.substr(i + 1, semi - i - 1);
    bool done = false;
    if (!name.empty() && name[0] == '#') {
      std::uint32_t cp = 0;
      bool ok = name.size() > 1;
      const bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
      for (std::size_t k = hex ? 2 : 1; ok && k < name.size(); ++k) {
        const char c = name[k];
        int digit;
        if (c >= '0' && c <= '9') digit = c - '0';
        else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        else { ok = false; break; }
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(digit);
        if (cp > 0x10FFFF) cp = 0x110000;
      }
      if (ok && name.size() > (hex ? 2u : 1u)) {
        detail::append_utf8(out, cp);
        done = true;
      }
    } else {
      for (const auto& [k, v] : kNamed) {
        if (k == name) {
          out += v;
          done = true;
          break;
        }
      }
    }
    if (done) {
      i = semi + 1;
    } else {
      out.push_back(s[i++]);
    }
  }
  return out;
}

namespace detail {

class TreeBuilder {
 public:
  static constexpr std::size_t kMaxDepth = 256;

  explicit TreeBuilder(Node& root) : open_{&root} {}

  void text(std::string_view raw) {
    if (raw.empty()) return;
    auto node = std::make_unique<Node>();
    node->kind = Node::Kind::Text;
    node->text = decode_entities(raw);
    append(std::move(node));
  }

  void open(std::string tag, std::vector<std::pair<std::string, std::string>> attrs,
            bool self_closing) {
    imply_end_tags(tag);
    auto node = std::make_unique<Node>();
    node->tag = std::move(tag);
    node->attrs = std::move(attrs);
    Node* raw = node.get();
    append(std::move(node));
    if (!self_closing && !is_void(raw->tag) && open_.size() < kMaxDepth) open_.push_back(raw);
  }

  void close(std::string_view tag) {
    for (std::size_t i = open_.size(); i-- > 1;) {
      if (open_[i]->tag == tag) {
        open_.resize(i);
        return;
      }
      // A closing tag never escapes its enclosing table or list.
      if (scope_boundary(open_[i]->tag) && open_[i]->tag != tag) return;
    }
  }

 private:
  static bool scope_boundary(std::string_view tag) {
    return tag == "table" || tag == "ul" || tag == "ol";
  }

  void append(std::unique_ptr<Node> node) {
    node->parent = open_.back();
    open_.back()->children.push_back(std::move(node));
  }

  void close_nearest(std::initializer_list<std::string_view> tags,
                     std::initializer_list<std::string_view> stop_at) {
    for (std::size_t i = open_.size(); i-- > 1;) {
      for (auto s : stop_at)
        if (open_[i]->tag == s) return;
      for (auto t : tags) {
        if (open_[i]->tag == t) {
          open_.resize(i);
          return;
        }
      }
    }
  }

  void imply_end_tags(std::string_view tag) {
    static constexpr std::string_view kClosesP[] = {
        "p",  "div", "ul", "ol", "table", "h1", "h2", "h3", "h4", "h5", "h6",
        "li", "dl",  "dd", "dt", "pre",   "blockquote", "section", "tr", "td", "th"};
    for (auto t : kClosesP) {
      if (t == tag) {
        close_nearest({"p"}, {"table", "td", "th", "li", "div", "ul", "ol"});
        break;
      }
    }
    if (tag == "li") close_nearest({"li"}, {"ul", "ol", "table"});
    if (tag == "dt" || tag == "dd") close_nearest({"dt", "dd"}, {"dl", "table"});
    if (tag == "td" || tag == "th") close_nearest({"td", "th"}, {"tr", "table"});
    if (tag == "tr") close_nearest({"tr"}, {"table"});
    if (tag == "tbody" || tag == "thead" || tag == "tfoot")
      close_nearest({"tbody", "thead", "tfoot"}, {"table"});
    if (tag == "option") close_nearest({"option"}, {"select"});
  }

  std::vector<Node*> open_;
};

inline bool is_name_char(char c) {
  return text::is_alnum(c) || c == '-' || c == '_' || c == ':' ||
         static_cast<unsigned char>(c) >= 0x80;
}

inline void parse(std::string_view s, TreeBuilder& builder) {
  std::size_t i = 0;
  std::size_t text_start = 0;
  const std::size_t n = s.size();

  auto flush_text = [&](std::size_t end) {
    if (end > text_start) builder.text(s.substr(text_start, end - text_start));
  };

  while (i < n) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    // Comments, doctype, processing instructions.
    if (s.compare(i, 4, "<!--") == 0) {
      flush_text(i);
      auto end = s.find("-->", i + 4);
      i = end == std::string_view::npos ? n : end + 3;
      text_start = i;
      continue;
    }
    if (i + 1 < n && (s[i + 1] == '!' || s[i + 1] == '?')) {
      flush_text(i);
      auto end = s.find('>', i + 2);
      i = end == std::string_view::npos ? n : end + 1;
      text_start = i;
      continue;
    }
    const bool closing = i + 1 < n && s[i + 1] == '/';
    std::size_t p = i + (closing ? 2 : 1);
    std::size_t name_start = p;
    if (p >= n || !text::is_alnum(s[p])) {
      ++i;  // a stray '<' is text
      continue;
    }
    while (p < n && is_name_char(s[p])) ++p;
    std::string tag = text::lower(s.substr(name_start, p - name_start));
    flush_text(i);

    std::vector<std::pair<std::string, std::string>> attrs;
    bool self_closing = false;
    while (p < n && s[p] != '>') {
      if (text::is_space(s[p])) {
        ++p;
        continue;
      }
      if (s[p] == '/') {
        self_closing = true;
        ++p;
        continue;
      }
      std::size_t a = p;
      while (p < n && !text::is_space(s[p]) && s[p] != '=' && s[p] != '>' && s[p] != '/') ++p;
      if (p == a) {
        ++p;
        continue;
      }
      std::string key = text::lower(s.substr(a, p - a));
      std::string value;
      while (p < n && text::is_space(s[p])) ++p;
      if (p < n && s[p] == '=') {
        ++p;
        while (p < n && text::is_space(s[p])) ++p;
        if (p < n && (s[p] == '"' || s[p] == '\'')) {
          const char q = s[p++];
          auto end = s.find(q, p);
          if (end == std::string_view::npos) end = n;
          value = decode_entities(s.substr(p, end - p));
          p = end < n ? end + 1 : n;
        } else {
          std::size_t v = p;
          while (p < n && !text::is_space(s[p]) && s[p] != '>') ++p;
          value = decode_entities(s.substr(v, p - v));
        }
      }
      self_closing = false;
      if (!closing) attrs.emplace_back(std::move(key), std::move(value));
    }
    i = p < n ? p + 1 : n;
    text_start = i;

    if (closing) {
      builder.close(tag);
      continue;
    }
    const bool raw = is_raw_text(tag) && !self_closing;
    builder.open(tag, std::move(attrs), self_closing);
    if (raw) {
      // Everything up to the matching end tag is literal text.
      std::size_t end = i;
      while (true) {
        end = s.find("</", end);
        if (end == std::string_view::npos) {
          end = n;
          break;
        }
        if (text::iequals(s.substr(end + 2, tag.size()), tag)) break;
        end += 2;
      }
      if (tag == "title" || tag == "textarea") builder.text(s.substr(i, end - i));
      builder.close(tag);
      if (end == n) {
        i = n;
      } else {
        auto gt = s.find('>', end);
        i = gt == std::string_view::npos ? n : gt + 1;
      }
      text_start = i;
    }
  }
  flush_text(n);
}

}  // namespace detail

inline Document::Document(std::string_view source) : root_(std::make_unique<Node>()) {
  detail::TreeBuilder builder(*root_);
  detail::parse(source, builder);
}

}  // namespace medmin::html
