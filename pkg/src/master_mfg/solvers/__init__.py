"""
表形式ソルバーパッケージ。

このパッケージは、古典的な Fictitious Play と OMD、系譜厳密な Master OMD、
および Munchausen 形式と明示和形式の一致を確かめる検証器を提供します。
"""
