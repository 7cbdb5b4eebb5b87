import markdown

from django import template
from django.utils.safestring import mark_safe

register = template.Library()


@register.filter
def fixed(value, digits=2):
    if value is None or value == '':
        return 'n/a'
    return '{:.{}f}'.format(float(value), int(digits))


@register.filter
def percent(value):
    '''A 0-1 rate as a percentage.'''
    if value is None:
        return 'n/a'
    return '{:.1f}%'.format(100.0 * float(value))


@register.simple_tag
def plus_minus(mean, ci):
    return '{} ± {}'.format(fixed(mean), fixed(ci))


@register.filter
def cell(value):
    # Pipes would end a Markdown table cell.
    return str(value).replace('|', '\\|')


@register.filter
def separator(header):
    return '|' + '|'.join('---' for _ in header) + '|'


@register.filter(name='markdown')
def render_markdown(text):
    return mark_safe(markdown.markdown(text, extensions=['extra']))
