#pragma once

#include <string_view>

namespace calltide::detail {

/// Contents of data/stopwords.txt, embedded at build time.
std::string_view english_stopwords_text();

}  // namespace calltide::detail
