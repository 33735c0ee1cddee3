#pragma once

#include "edc/types.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace edc {

class Backend;

struct CorpusSpec {
    std::filesystem::path source;
    /// Exact text the analysis starts at; empty disables the offset.
    std::string start_marker;
    /// Tokens retained after the marker. 0 means "derive from the profile config".
    std::size_t token_budget = 0;
    std::string corpus_id;
};

struct CleanedCorpus {
    /// Verbatim suffix of the raw text, starting at the marker.
    std::string text;
    std::string corpus_id;
    /// Unicode code points in text.
    std::size_t char_count = 0;
    std::vector<std::string> warnings;
};

/// Throws EncodingError with the byte offset of the first ill-formed sequence.
void validate_utf8(std::string_view text);

/// NFC form of valid UTF-8 text.
std::string nfc_normalize(std::string_view text);

/// Drops everything before the first occurrence of marker.
///
/// Matching is a byte-level substring search between the NFC forms of raw and
/// marker; the returned text is the corresponding suffix of raw itself, with
/// whitespace and normalization form untouched. An empty marker returns raw
/// unchanged and records a warning. Throws EncodingError or MarkerNotFound.
CleanedCorpus strip_boilerplate(std::string_view raw, std::string_view marker,
                                std::string corpus_id = {});

/// Reads spec.source and strips it with spec.start_marker.
CleanedCorpus ingest(const CorpusSpec& spec);

/// First budget tokens of backend.tokenize(corpus.text).
/// Throws InsufficientTokens rather than returning fewer.
TokenSequence load_tokens(const CleanedCorpus& corpus, const Backend& backend, std::size_t budget);

/// Corpus manifest: {"corpus_id", "path", "start_marker"[, "token_budget"]}.
/// A relative path is resolved against the manifest's directory.
CorpusSpec load_corpus_manifest(const std::filesystem::path& manifest_path);

} // namespace edc
