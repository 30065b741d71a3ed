#pragma once

// Text case-file format, version 1.
//
//   acdcopf-case v1
//   base_mva 100
//   a_q 0.001
//   [bus]
//   # id kind vmin vmax ref region pload qload [gshunt bshunt]
//   1 AC 0.9 1.1 1 north 0.0 0.0
//   [branch]
//   # from to r x b
//   1 2 0.01 0.1 0.0
//   [gen]
//   # bus pmin pmax qmin qmax bg
//   1 0.0 3.0 -1.5 1.5 50
//   [conv]
//   # acbus dcbus srated [c0 c2]
//   2 101 1.0
//
// All electrical quantities are per-unit on base_mva; bg is currency/MWh
// and a_q currency/h per Mvar^2. '#' starts a comment, blank lines are
// ignored. Converter rows without c0/c2 use the default loss polynomial.

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "acdcopf/network.hpp"

namespace acdcopf {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    if (i >= s.size() || s[i] == '#') break;
    size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r' && s[j] != '#') ++j;
    out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(const std::string& tok, int line) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "expected a number, got '" + tok + "'");
  }
}

inline int parse_int(const std::string& tok, int line) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(line, "expected an integer, got '" + tok + "'");
  return v;
}

}  // namespace detail

inline Network parse_case(std::string_view text) {
  Network net;
  net.base_mva = 100.0;
  net.a_q = 0.001;

  enum class Section { Header, Bus, Branch, Gen, Conv } section = Section::Header;
  bool version_seen = false;

  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto tok = detail::tokenize(raw);
    if (tok.empty()) continue;

    if (!version_seen) {
      if (tok.size() != 2 || tok[0] != "acdcopf-case")
        throw ParseError(lineno, "expected header 'acdcopf-case v1'");
      if (tok[1] != "v1") throw ParseError(lineno, "unsupported case version '" + tok[1] + "'");
      version_seen = true;
      continue;
    }

    if (tok[0][0] == '[') {
      if (tok.size() != 1) throw ParseError(lineno, "stray tokens after section marker");
      if (tok[0] == "[bus]")
        section = Section::Bus;
      else if (tok[0] == "[branch]")
        section = Section::Branch;
      else if (tok[0] == "[gen]")
        section = Section::Gen;
      else if (tok[0] == "[conv]")
        section = Section::Conv;
      else
        throw ParseError(lineno, "unknown section '" + tok[0] + "'");
      continue;
    }

    switch (section) {
      case Section::Header: {
        if (tok.size() != 2) throw ParseError(lineno, "header entries are 'key value'");
        if (tok[0] == "base_mva")
          net.base_mva = detail::parse_double(tok[1], lineno);
        else if (tok[0] == "a_q")
          net.a_q = detail::parse_double(tok[1], lineno);
        else
          throw ParseError(lineno, "unknown header key '" + tok[0] + "'");
        break;
      }
      case Section::Bus: {
        if (tok.size() != 8 && tok.size() != 10)
          throw ParseError(lineno, "bus row needs 8 or 10 fields");
        Bus b;
        b.id = detail::parse_int(tok[0], lineno);
        if (tok[1] == "AC")
          b.kind = BusKind::AC;
        else if (tok[1] == "DC")
          b.kind = BusKind::DC;
        else
          throw ParseError(lineno, "bus kind must be AC or DC, got '" + tok[1] + "'");
        b.v_min = detail::parse_double(tok[2], lineno);
        b.v_max = detail::parse_double(tok[3], lineno);
        int ref = detail::parse_int(tok[4], lineno);
        if (ref != 0 && ref != 1) throw ParseError(lineno, "ref flag must be 0 or 1");
        b.is_ref = ref == 1;
        b.region = tok[5];
        b.p_load = detail::parse_double(tok[6], lineno);
        b.q_load = detail::parse_double(tok[7], lineno);
        if (tok.size() == 10) {
          b.g_shunt = detail::parse_double(tok[8], lineno);
          b.b_shunt = detail::parse_double(tok[9], lineno);
        }
        net.buses.push_back(std::move(b));
        break;
      }
      case Section::Branch: {
        if (tok.size() != 5) throw ParseError(lineno, "branch row needs 5 fields");
        Branch br;
        br.from = detail::parse_int(tok[0], lineno);
        br.to = detail::parse_int(tok[1], lineno);
        br.r = detail::parse_double(tok[2], lineno);
        br.x = detail::parse_double(tok[3], lineno);
        br.b_charge = detail::parse_double(tok[4], lineno);
        net.branches.push_back(br);
        break;
      }
      case Section::Gen: {
        if (tok.size() != 6) throw ParseError(lineno, "gen row needs 6 fields");
        Generator g;
        g.bus = detail::parse_int(tok[0], lineno);
        g.p_min = detail::parse_double(tok[1], lineno);
        g.p_max = detail::parse_double(tok[2], lineno);
        g.q_min = detail::parse_double(tok[3], lineno);
        g.q_max = detail::parse_double(tok[4], lineno);
        g.b_g = detail::parse_double(tok[5], lineno);
        net.generators.push_back(g);
        break;
      }
      case Section::Conv: {
        if (tok.size() != 3 && tok.size() != 5)
          throw ParseError(lineno, "conv row needs 3 or 5 fields");
        Converter c;
        c.ac_bus = detail::parse_int(tok[0], lineno);
        c.dc_bus = detail::parse_int(tok[1], lineno);
        c.s_rated = detail::parse_double(tok[2], lineno);
        if (tok.size() == 5) {
          c.loss_c0 = detail::parse_double(tok[3], lineno);
          c.loss_c2 = detail::parse_double(tok[4], lineno);
          if (c.loss_c0 < 0.0 || c.loss_c2 < 0.0)
            throw ParseError(lineno, "converter loss coefficients must be nonnegative");
        }
        net.converters.push_back(c);
        break;
      }
    }
  }
  if (!version_seen) throw ParseError(lineno, "empty case file");

  net.validate();
  return net;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string serialize_case(const Network& net) {
  std::ostringstream out;
  out << "acdcopf-case v1\n";
  out << "base_mva " << detail::fmt(net.base_mva) << "\n";
  out << "a_q " << detail::fmt(net.a_q) << "\n";
  out << "[bus]\n";
  for (const Bus& b : net.buses) {
    out << b.id << ' ' << to_string(b.kind) << ' ' << detail::fmt(b.v_min) << ' '
        << detail::fmt(b.v_max) << ' ' << (b.is_ref ? 1 : 0) << ' ' << b.region << ' '
        << detail::fmt(b.p_load) << ' ' << detail::fmt(b.q_load);
    if (b.g_shunt != 0.0 || b.b_shunt != 0.0)
      out << ' ' << detail::fmt(b.g_shunt) << ' ' << detail::fmt(b.b_shunt);
    out << '\n';
  }
  out << "[branch]\n";
  for (const Branch& br : net.branches)
    out << br.from << ' ' << br.to << ' ' << detail::fmt(br.r) << ' ' << detail::fmt(br.x) << ' '
        << detail::fmt(br.b_charge) << '\n';
  out << "[gen]\n";
  for (const Generator& g : net.generators)
    out << g.bus << ' ' << detail::fmt(g.p_min) << ' ' << detail::fmt(g.p_max) << ' '
        << detail::fmt(g.q_min) << ' ' << detail::fmt(g.q_max) << ' ' << detail::fmt(g.b_g)
        << '\n';
  out << "[conv]\n";
  for (const Converter& c : net.converters) {
    out << c.ac_bus << ' ' << c.dc_bus << ' ' << detail::fmt(c.s_rated);
    if (c.loss_c0 >= 0.0 || c.loss_c2 >= 0.0)
      out << ' ' << detail::fmt(c.c0()) << ' ' << detail::fmt(c.c2());
    out << '\n';
  }
  return out.str();
}

}  // namespace acdcopf
