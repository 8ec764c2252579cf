#include <iostream>

#include "sail/app.hpp"

int main(int argc, char** argv) { return sail::app::run_cli(argc, argv, std::cout, std::cerr); }
