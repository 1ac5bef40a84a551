#pragma once

#include <string>

#include "reslm/ngram.hpp"
#include "reslm/vocabulary.hpp"

namespace reslm {

/// Serializes a model to ARPA text:
///
///   \data\
///   ngram 1=<count>
///   ...
///
///   \k-grams:
///   <log10 prob>\t<tokens joined by spaces>[\t<log10 backoff>]
///   ...
///   \end\
///
/// Log values carry 7 significant digits; the backoff column is omitted at
/// the highest order and whenever the backoff weight is exactly 1. Every
/// vocabulary token appears in the unigram section; BOS takes the
/// conventional -99 sentinel (it is context-only), as does any all-BOS
/// context line at higher orders. Entries are sorted by id sequence, so
/// export -> import -> export is byte-identical.
std::string export_arpa(const KneserNeyModel& model, const Vocabulary& vocab);

/// Inverse of export_arpa. Malformed headers, order mismatches, and tokens
/// outside the vocabulary raise ParseError with the offending line number.
/// Round-trip queries agree with the source model to 1e-5 in natural log.
KneserNeyModel import_arpa(const std::string& text, const Vocabulary& vocab);

}  // namespace reslm
