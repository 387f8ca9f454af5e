#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "gazevit/allocator.hpp"

int main(int argc, char** argv) {
    gazevit::tune_allocator();
    doctest::Context context(argc, argv);
    return context.run();
}
