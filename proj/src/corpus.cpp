#include "edc/corpus.hpp"

#include "edc/backend.hpp"
#include "edc/error.hpp"
#include "edc/io.hpp"

#include <nlohmann/json.hpp>
#include <unicode/bytestream.h>
#include <unicode/normalizer2.h>
#include <unicode/utf8.h>

namespace edc {

namespace {

constexpr const char* kModule = "corpus_ingest";

const icu::Normalizer2& nfc_instance() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status) || nfc == nullptr) {
        fail(Errc::EncodingError, kModule, "ICU NFC normalizer unavailable");
    }
    return *nfc;
}

std::size_t count_code_points(std::string_view text) {
    std::size_t n = 0;
    for (unsigned char c : text) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

// Byte offset in raw whose NFC prefix has length nfc_offset, found by
// normalizing raw chunk by chunk between hasBoundaryBefore code points.
std::size_t raw_offset_for(std::string_view raw, std::size_t nfc_offset) {
    const icu::Normalizer2& nfc = nfc_instance();
    const auto* bytes = reinterpret_cast<const uint8_t*>(raw.data());
    const auto length = static_cast<int32_t>(raw.size());

    // nfc_len is the NFC length of raw[0, chunk_start)
    std::size_t nfc_len = 0;
    int32_t chunk_start = 0;
    int32_t i = 0;
    while (i < length) {
        const int32_t at = i;
        UChar32 c;
        U8_NEXT(bytes, i, length, c);
        if (at == chunk_start || !nfc.hasBoundaryBefore(c)) continue;

        std::string piece;
        icu::StringByteSink<std::string> sink(&piece);
        UErrorCode status = U_ZERO_ERROR;
        nfc.normalizeUTF8(0, icu::StringPiece(raw.data() + chunk_start, at - chunk_start), sink,
                          nullptr, status);
        if (U_FAILURE(status)) fail(Errc::EncodingError, kModule, "normalization failed");
        // match starts inside this chunk (marker opens with a combining mark)
        if (nfc_len + piece.size() > nfc_offset) return static_cast<std::size_t>(chunk_start);
        nfc_len += piece.size();
        chunk_start = at;
        if (nfc_len == nfc_offset) return static_cast<std::size_t>(chunk_start);
    }
    return static_cast<std::size_t>(chunk_start);
}

} // namespace

void validate_utf8(std::string_view text) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int64_t>(text.size());
    if (length > INT32_MAX) fail(Errc::EncodingError, kModule, "input larger than 2 GiB");
    int32_t i = 0;
    while (i < length) {
        const int32_t at = i;
        UChar32 c;
        U8_NEXT(bytes, i, static_cast<int32_t>(length), c);
        if (c < 0) {
            fail(Errc::EncodingError, kModule,
                 "invalid UTF-8 at byte offset " + std::to_string(at));
        }
    }
}

std::string nfc_normalize(std::string_view text) {
    validate_utf8(text);
    std::string out;
    icu::StringByteSink<std::string> sink(&out);
    UErrorCode status = U_ZERO_ERROR;
    nfc_instance().normalizeUTF8(0, icu::StringPiece(text.data(), static_cast<int32_t>(text.size())),
                                 sink, nullptr, status);
    if (U_FAILURE(status)) fail(Errc::EncodingError, kModule, "NFC normalization failed");
    return out;
}

CleanedCorpus strip_boilerplate(std::string_view raw, std::string_view marker,
                                std::string corpus_id) {
    validate_utf8(raw);
    validate_utf8(marker);

    CleanedCorpus out;
    out.corpus_id = std::move(corpus_id);
    if (marker.empty()) {
        out.text = std::string(raw);
        out.char_count = count_code_points(out.text);
        out.warnings.push_back("no start marker configured; no offset applied");
        return out;
    }

    const std::string marker_nfc = nfc_normalize(marker);
    UErrorCode status = U_ZERO_ERROR;
    const bool raw_is_nfc = nfc_instance().isNormalizedUTF8(
        icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())), status);
    if (U_FAILURE(status)) fail(Errc::EncodingError, kModule, "NFC check failed");

    std::size_t offset;
    if (raw_is_nfc) {
        offset = raw.find(marker_nfc);
        if (offset == std::string_view::npos) {
            fail(Errc::MarkerNotFound, kModule, "start marker '" + std::string(marker) + "' not found");
        }
    } else {
        const std::string raw_nfc = nfc_normalize(raw);
        const std::size_t nfc_pos = raw_nfc.find(marker_nfc);
        if (nfc_pos == std::string::npos) {
            fail(Errc::MarkerNotFound, kModule, "start marker '" + std::string(marker) + "' not found");
        }
        offset = raw_offset_for(raw, nfc_pos);
    }

    out.text = std::string(raw.substr(offset));
    out.char_count = count_code_points(out.text);
    return out;
}

CleanedCorpus ingest(const CorpusSpec& spec) {
    const std::string raw = read_file(spec.source, kModule);
    return strip_boilerplate(raw, spec.start_marker,
                             spec.corpus_id.empty() ? spec.source.stem().string() : spec.corpus_id);
}

TokenSequence load_tokens(const CleanedCorpus& corpus, const Backend& backend, std::size_t budget) {
    if (budget < 1) fail(Errc::ConfigError, kModule, "token budget must be at least 1");
    TokenSequence tokens = backend.tokenize(corpus.text);
    if (tokens.size() < budget) {
        fail(Errc::InsufficientTokens, kModule,
             "corpus '" + corpus.corpus_id + "' tokenizes to " + std::to_string(tokens.size()) +
                 " tokens, budget is " + std::to_string(budget));
    }
    tokens.resize(budget);
    return tokens;
}

CorpusSpec load_corpus_manifest(const std::filesystem::path& manifest_path) {
    const std::string text = read_file(manifest_path, kModule);
    try {
        const auto j = nlohmann::json::parse(text);
        CorpusSpec spec;
        spec.corpus_id = j.at("corpus_id").get<std::string>();
        std::filesystem::path p = j.at("path").get<std::string>();
        spec.source = p.is_relative() ? manifest_path.parent_path() / p : p;
        spec.start_marker = j.value("start_marker", std::string());
        spec.token_budget = j.value("token_budget", std::size_t{0});
        return spec;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ConfigError, kModule,
             "malformed corpus manifest " + manifest_path.string() + ": " + e.what());
    }
}

} // namespace edc
