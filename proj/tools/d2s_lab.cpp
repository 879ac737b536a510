#include <string>
#include <vector>

#include "d2s/cli.hpp"

int main(int argc, char** argv) {
    return d2s::cli_main(std::vector<std::string>(argv, argv + argc));
}
